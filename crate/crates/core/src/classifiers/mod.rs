//! Subspace regression classifiers and the extrinsic mean.
//!
//! Both classifiers fit one ridge regression per class and assign a query
//! to the class whose (feature) subspace reproduces it best:
//!
//! * [`NaiveRrcModel`] treats preshapes as plain vectors in `ℂᵏ`.
//! * [`KrrcModel`] works in the RKHS of a shape kernel through Gram matrices
//!   only.

mod krrc;
mod mean;
mod naive;
mod serialize;

use std::collections::BTreeMap;

pub use krrc::{krrc_fit, krrc_predict, KrrcModel, KrrcOptions};
pub use mean::extrinsic_mean;
pub use naive::{rrc_fit, rrc_predict, NaiveRrcModel};
pub use serialize::{ModelDocument, FittedModel, MODEL_FORMAT, MODEL_VERSION};

use crate::error::{Result, ShapeError};
use crate::shape::Preshape;

/// A preshape with its category and record id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledShape {
    pub id: String,
    pub label: u32,
    pub shape: Preshape,
}

impl LabeledShape {
    pub fn new(id: impl Into<String>, label: u32, shape: Preshape) -> Self {
        Self {
            id: id.into(),
            label,
            shape,
        }
    }
}

/// Classifier output. `per_class_scores[i]` belongs to the i-th entry of the
/// model's class labels; lower is closer.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: u32,
    pub per_class_scores: Vec<f64>,
}

/// Anything that maps a preshape to a [`Prediction`].
pub trait Classifier {
    fn class_labels(&self) -> &[u32];
    fn predict(&self, u: &Preshape) -> Prediction;

    fn predict_labels(&self, shapes: &[Preshape]) -> Vec<u32> {
        shapes.iter().map(|u| self.predict(u).label).collect()
    }
}

/// Index of the smallest score; the first index wins ties and NaN never wins.
pub(crate) fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] || (scores[best].is_nan() && !s.is_nan()) {
            best = i;
        }
    }
    best
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(ShapeError::InvalidInput(format!(
            "ridge parameter lambda must be positive and finite, got {lambda}"
        )))
    }
}

/// Groups training shapes by label. With `classes` given, every listed
/// class must be present and no other label may appear.
pub(crate) fn group_by_class(
    train: &[LabeledShape],
    classes: Option<&[u32]>,
) -> Result<(Vec<u32>, Vec<Vec<Preshape>>)> {
    if train.is_empty() {
        return Err(ShapeError::EmptyInput("no training shapes".into()));
    }
    let k = train[0].shape.k();
    if let Some(bad) = train.iter().find(|s| s.shape.k() != k) {
        return Err(ShapeError::InvalidInput(format!(
            "shape `{}` has {} landmarks, expected {k}",
            bad.id,
            bad.shape.k()
        )));
    }
    let mut groups: BTreeMap<u32, Vec<Preshape>> = BTreeMap::new();
    if let Some(classes) = classes {
        for &c in classes {
            groups.insert(c, Vec::new());
        }
    }
    for s in train {
        match groups.get_mut(&s.label) {
            Some(g) => g.push(s.shape.clone()),
            None if classes.is_none() => {
                groups.insert(s.label, vec![s.shape.clone()]);
            }
            None => {
                return Err(ShapeError::LabelMismatch(format!(
                    "training label {} is not in the class list",
                    s.label
                )))
            }
        }
    }
    if let Some((&label, _)) = groups.iter().find(|(_, g)| g.is_empty()) {
        return Err(ShapeError::EmptyClass { label });
    }
    Ok(groups.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmin_prefers_lowest_index_on_ties() {
        assert_eq!(argmin(&[1.0, 0.5, 0.5]), 1);
        assert_eq!(argmin(&[0.0, 0.0]), 0);
        assert_eq!(argmin(&[f64::NAN, 2.0, 1.0]), 2);
        assert_eq!(argmin(&[-3.0]), 0);
    }
}
