use log::debug;

use super::metrics::compute_metrics;
use super::split::stratified_split;
use super::Method;
use crate::classifiers::{Classifier, FittedModel, KrrcModel, KrrcOptions, LabeledShape, NaiveRrcModel};
use crate::error::{Result, ShapeError};
use crate::kernels::KernelSpec;
use crate::shape::Preshape;

/// Fraction of the training subsample used for fitting during model
/// selection; the rest is the validation holdout.
pub const INNER_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lambda_grid: Vec<f64>,
    pub sigma_sq_grid: Vec<f64>,
    /// Passed through to KRRC fits.
    pub allow_indefinite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridChoice {
    pub lambda: f64,
    /// `None` for naive RRC, which has no kernel.
    pub sigma_sq: Option<f64>,
    pub validation_f1: f64,
}

/// Fits `method` on `train`. `sigma_sq` is required for KRRC methods.
pub fn fit_method(
    method: Method,
    train: &[LabeledShape],
    classes: &[u32],
    lambda: f64,
    sigma_sq: Option<f64>,
    allow_indefinite: bool,
) -> Result<FittedModel> {
    match method.kernel_family() {
        None => Ok(FittedModel::Naive(NaiveRrcModel::fit_with_classes(train, classes, lambda)?)),
        Some(family) => {
            let sigma_sq = sigma_sq
                .ok_or_else(|| ShapeError::InvalidInput(format!("{method} needs a bandwidth sigma^2")))?;
            let options = KrrcOptions {
                allow_indefinite,
                ..Default::default()
            };
            Ok(FittedModel::Krrc(KrrcModel::fit_with(
                train,
                Some(classes),
                KernelSpec::new(family, sigma_sq)?,
                lambda,
                options,
            )?))
        }
    }
}

fn sorted_unique(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Chooses `(λ, σ²)` by macro F₁ on an inner stratified holdout of `train`.
///
/// Grids are sorted before the search and the first maximum wins, so ties
/// go to the smaller `λ`, then the smaller `σ²`, regardless of grid order.
/// Candidates whose fit fails are skipped.
pub fn grid_search(train: &[LabeledShape], grid: &GridSpec, method: Method, inner_seed: u64) -> Result<GridChoice> {
    let lambdas = sorted_unique(&grid.lambda_grid);
    let sigmas: Vec<Option<f64>> = match method.kernel_family() {
        Some(_) => sorted_unique(&grid.sigma_sq_grid).into_iter().map(Some).collect(),
        None => vec![None],
    };
    if lambdas.is_empty() || sigmas.is_empty() {
        return Err(ShapeError::InvalidInput("empty hyperparameter grid".into()));
    }

    let mut classes: Vec<u32> = train.iter().map(|s| s.label).collect();
    classes.sort_unstable();
    classes.dedup();

    if lambdas.len() == 1 && sigmas.len() == 1 {
        return Ok(GridChoice {
            lambda: lambdas[0],
            sigma_sq: sigmas[0],
            validation_f1: f64::NAN,
        });
    }

    let (inner_train, validation) = stratified_split(train, INNER_TRAIN_FRACTION, inner_seed)?;
    let val_shapes: Vec<Preshape> = validation.iter().map(|s| s.shape.clone()).collect();
    let val_truth: Vec<u32> = validation.iter().map(|s| s.label).collect();

    let mut best: Option<GridChoice> = None;
    for &lambda in &lambdas {
        for &sigma_sq in &sigmas {
            let model = match fit_method(method, &inner_train, &classes, lambda, sigma_sq, grid.allow_indefinite) {
                Ok(m) => m,
                Err(e) => {
                    debug!("{method}: skipping lambda={lambda} sigma_sq={sigma_sq:?}: {e}");
                    continue;
                }
            };
            let pred = model.predict_labels(&val_shapes);
            let f1 = compute_metrics(&pred, &val_truth, &classes)?.f1;
            if best.is_none_or(|b| f1 > b.validation_f1) {
                best = Some(GridChoice {
                    lambda,
                    sigma_sq,
                    validation_f1: f1,
                });
            }
        }
    }
    best.ok_or_else(|| ShapeError::InvalidInput(format!("{method}: every grid candidate failed to fit")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, leaf_outline, perturbed_templates};

    fn synthetic(per_class: usize, noise: f64, seed: u64) -> Vec<LabeledShape> {
        let base = leaf_outline(12).unwrap();
        let templates = perturbed_templates(&base, 3, 0.25, 5).unwrap();
        generate_synthetic(&templates, per_class, noise, seed)
            .unwrap()
            .preshapes()
            .unwrap()
    }

    fn grid(l: &[f64], s: &[f64]) -> GridSpec {
        GridSpec {
            lambda_grid: l.to_vec(),
            sigma_sq_grid: s.to_vec(),
            allow_indefinite: true,
        }
    }

    #[test]
    fn one_by_one_grid_is_returned_as_is() {
        let d = synthetic(10, 0.03, 1);
        let c = grid_search(&d, &grid(&[0.5], &[2.0]), Method::VwgKrrc, 0).unwrap();
        assert_eq!((c.lambda, c.sigma_sq), (0.5, Some(2.0)));
        let c = grid_search(&d, &grid(&[0.5], &[2.0, 3.0]), Method::NaiveRrc, 0).unwrap();
        assert_eq!((c.lambda, c.sigma_sq), (0.5, None));
    }

    #[test]
    fn degenerate_bandwidth_loses_to_a_reasonable_one() {
        let d = synthetic(30, 0.03, 2);
        let c = grid_search(&d, &grid(&[1e-3], &[1e-8, 0.1]), Method::VwgKrrc, 3).unwrap();
        assert_eq!(c.sigma_sq, Some(0.1));
        assert!(c.validation_f1 > 0.5);
    }

    #[test]
    fn search_is_deterministic_and_order_free() {
        let d = synthetic(20, 0.05, 4);
        let g1 = grid(&[1e-3, 1e-1, 1.0], &[0.01, 0.1, 1.0]);
        let g2 = grid(&[1.0, 1e-3, 1e-1, 1e-1], &[1.0, 0.1, 0.01]);
        let a = grid_search(&d, &g1, Method::FpgKrrc, 9).unwrap();
        let b = grid_search(&d, &g1, Method::FpgKrrc, 9).unwrap();
        let c = grid_search(&d, &g2, Method::FpgKrrc, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn krrc_without_bandwidth_is_an_error() {
        let d = synthetic(5, 0.05, 4);
        assert!(fit_method(Method::VwgKrrc, &d, &[0, 1, 2], 0.1, None, false).is_err());
    }
}
