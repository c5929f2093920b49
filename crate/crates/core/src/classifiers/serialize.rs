//! JSON model documents.
//!
//! ```json
//! {
//!   "format": "shapekrrc-model",
//!   "version": 1,
//!   "method": "krrc",
//!   "lambda": 0.001,
//!   "kernel": { "family": "vwg", "bandwidth_sq": 0.1 },
//!   "allow_indefinite": false,
//!   "include_self_term": false,
//!   "classes": [ { "label": 0, "shapes": [ [[re, im], ...], ... ] } ]
//! }
//! ```
//!
//! `kernel` is `null` for `"method": "naive-rrc"`. Factorizations are not
//! stored; loading refits from the training preshapes.

use serde::{Deserialize, Serialize};

use super::{Classifier, KrrcModel, KrrcOptions, LabeledShape, NaiveRrcModel, Prediction};
use crate::error::{Result, ShapeError};
use crate::kernels::KernelSpec;
use crate::shape::{Preshape, C64};

pub const MODEL_FORMAT: &str = "shapekrrc-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub method: String,
    pub lambda: f64,
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub allow_indefinite: bool,
    #[serde(default)]
    pub include_self_term: bool,
    pub classes: Vec<ClassDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDocument {
    pub label: u32,
    pub shapes: Vec<Vec<C64>>,
}

/// Either classifier, as fitted by the benchmark or restored from a
/// [`ModelDocument`].
#[derive(Debug, Clone)]
pub enum FittedModel {
    Krrc(KrrcModel),
    Naive(NaiveRrcModel),
}

impl Classifier for FittedModel {
    fn class_labels(&self) -> &[u32] {
        match self {
            FittedModel::Krrc(m) => m.class_labels(),
            FittedModel::Naive(m) => m.class_labels(),
        }
    }

    fn predict(&self, u: &Preshape) -> Prediction {
        match self {
            FittedModel::Krrc(m) => m.predict(u),
            FittedModel::Naive(m) => m.predict(u),
        }
    }
}

impl FittedModel {
    pub fn used_indefinite_fallback(&self) -> bool {
        matches!(self, FittedModel::Krrc(m) if m.used_indefinite_fallback())
    }

    pub fn to_document(&self) -> ModelDocument {
        match self {
            FittedModel::Krrc(m) => ModelDocument::from_krrc(m),
            FittedModel::Naive(m) => ModelDocument::from_naive(m),
        }
    }
}

fn coords(u: &Preshape) -> Vec<C64> {
    u.coords().iter().copied().collect()
}

impl ModelDocument {
    pub fn from_krrc(model: &KrrcModel) -> Self {
        let options = model.options();
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            method: "krrc".into(),
            lambda: model.lambda(),
            kernel: Some(*model.kernel()),
            allow_indefinite: options.allow_indefinite,
            include_self_term: options.include_self_term,
            classes: model
                .class_shapes()
                .map(|(label, shapes)| ClassDocument {
                    label,
                    shapes: shapes.iter().map(coords).collect(),
                })
                .collect(),
        }
    }

    pub fn from_naive(model: &NaiveRrcModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            method: "naive-rrc".into(),
            lambda: model.lambda(),
            kernel: None,
            allow_indefinite: false,
            include_self_term: false,
            classes: model
                .class_labels()
                .iter()
                .zip(model.class_data())
                .map(|(&label, data)| ClassDocument {
                    label,
                    shapes: data.column_iter().map(|c| c.iter().copied().collect()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT {
            return Err(ShapeError::InvalidInput(format!("unknown model format `{}`", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(ShapeError::InvalidInput(format!(
                "unsupported model version {}",
                doc.version
            )));
        }
        Ok(doc)
    }

    fn training_set(&self) -> Result<Vec<LabeledShape>> {
        let mut out = Vec::new();
        for class in &self.classes {
            for (j, s) in class.shapes.iter().enumerate() {
                let shape = Preshape::from_coords(s.clone())?;
                out.push(LabeledShape::new(format!("{}-{j}", class.label), class.label, shape));
            }
        }
        Ok(out)
    }

    /// Refits the stored model.
    pub fn into_model(self) -> Result<FittedModel> {
        let train = self.training_set()?;
        let classes: Vec<u32> = self.classes.iter().map(|c| c.label).collect();
        match (self.method.as_str(), self.kernel) {
            ("krrc", Some(kernel)) => {
                let options = KrrcOptions {
                    allow_indefinite: self.allow_indefinite,
                    include_self_term: self.include_self_term,
                };
                Ok(FittedModel::Krrc(KrrcModel::fit_with(
                    &train,
                    Some(&classes),
                    kernel,
                    self.lambda,
                    options,
                )?))
            }
            ("krrc", None) => Err(ShapeError::InvalidInput("krrc model without kernel".into())),
            ("naive-rrc", _) => Ok(FittedModel::Naive(NaiveRrcModel::fit_with_classes(
                &train,
                &classes,
                self.lambda,
            )?)),
            (other, _) => Err(ShapeError::InvalidInput(format!("unknown model method `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use crate::sampling::random_preshape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn train(rng: &mut ChaCha8Rng) -> Vec<LabeledShape> {
        (0..12)
            .map(|i| LabeledShape::new(i.to_string(), (i % 3) as u32, random_preshape(6, rng)))
            .collect()
    }

    #[test]
    fn krrc_document_restores_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = train(&mut rng);
        let spec = KernelSpec::new(KernelFamily::Fpg, 0.2).unwrap();
        let model = KrrcModel::fit(&data, spec, 0.01).unwrap();
        let json = ModelDocument::from_krrc(&model).to_json().unwrap();
        assert!(json.contains("\"family\": \"fpg\""));
        let restored = ModelDocument::from_json(&json).unwrap().into_model().unwrap();
        for _ in 0..10 {
            let u = random_preshape(6, &mut rng);
            assert_eq!(model.predict(&u), restored.predict(&u));
        }
    }

    #[test]
    fn naive_document_restores_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = train(&mut rng);
        let model = NaiveRrcModel::fit(&data, 0.1).unwrap();
        let doc = ModelDocument::from_naive(&model);
        assert!(doc.kernel.is_none());
        let restored = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap().into_model().unwrap();
        let u = random_preshape(6, &mut rng);
        assert_eq!(model.predict(&u), restored.predict(&u));
    }

    #[test]
    fn rejects_foreign_documents() {
        let bad = r#"{"format":"other","version":1,"method":"krrc","lambda":1,"kernel":null,"classes":[]}"#;
        assert!(ModelDocument::from_json(bad).is_err());
        let v2 = r#"{"format":"shapekrrc-model","version":2,"method":"krrc","lambda":1,"kernel":null,"classes":[]}"#;
        assert!(ModelDocument::from_json(v2).is_err());
    }
}
