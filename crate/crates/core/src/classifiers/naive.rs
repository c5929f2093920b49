use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{argmin, check_lambda, group_by_class, Classifier, LabeledShape, Prediction};
use crate::error::{Result, ShapeError};
use crate::shape::{Preshape, C64};

/// Per-class complex ridge regression on raw preshape vectors.
#[derive(Debug, Clone)]
pub struct NaiveRrcModel {
    class_labels: Vec<u32>,
    lambda: f64,
    subspaces: Vec<ClassSubspace>,
}

#[derive(Debug, Clone)]
struct ClassSubspace {
    /// k × n_i, one preshape per column.
    data: DMatrix<C64>,
    /// Factor of U*U + λI.
    normal: Cholesky<C64, Dyn>,
}

impl ClassSubspace {
    fn new(shapes: &[Preshape], lambda: f64) -> Result<Self> {
        let columns: Vec<DVector<C64>> = shapes.iter().map(|s| s.coords().clone()).collect();
        let data = DMatrix::from_columns(&columns);
        let n = data.ncols();
        let mut normal = data.adjoint() * &data;
        for i in 0..n {
            normal[(i, i)] += C64::new(lambda, 0.0);
        }
        let normal = Cholesky::new(normal).ok_or_else(|| {
            ShapeError::InvalidInput("U*U + lambda I is not positive definite".into())
        })?;
        Ok(Self { data, normal })
    }

    /// `U (U*U + λI)⁻¹ U* u`
    fn project(&self, u: &DVector<C64>) -> DVector<C64> {
        let beta = self.normal.solve(&(self.data.adjoint() * u));
        &self.data * beta
    }
}

impl NaiveRrcModel {
    pub fn fit(train: &[LabeledShape], lambda: f64) -> Result<Self> {
        Self::build(train, None, lambda)
    }

    /// Like [`fit`](Self::fit), but every class in `classes` must have
    /// training data.
    pub fn fit_with_classes(train: &[LabeledShape], classes: &[u32], lambda: f64) -> Result<Self> {
        Self::build(train, Some(classes), lambda)
    }

    fn build(train: &[LabeledShape], classes: Option<&[u32]>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let (class_labels, groups) = group_by_class(train, classes)?;
        let subspaces = groups
            .iter()
            .map(|g| ClassSubspace::new(g, lambda))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            class_labels,
            lambda,
            subspaces,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Stacked training preshapes of each class (k × n_i).
    pub fn class_data(&self) -> impl Iterator<Item = &DMatrix<C64>> {
        self.subspaces.iter().map(|s| &s.data)
    }

    /// Ridge projection of `u` onto the span of class `class_index`.
    pub fn projection(&self, class_index: usize, u: &Preshape) -> DVector<C64> {
        self.subspaces[class_index].project(u.coords())
    }
}

impl Classifier for NaiveRrcModel {
    fn class_labels(&self) -> &[u32] {
        &self.class_labels
    }

    fn predict(&self, u: &Preshape) -> Prediction {
        let scores: Vec<f64> = self
            .subspaces
            .iter()
            .map(|s| (s.project(u.coords()) - u.coords()).norm_squared())
            .collect();
        Prediction {
            label: self.class_labels[argmin(&scores)],
            per_class_scores: scores,
        }
    }
}

pub fn rrc_fit(train: &[LabeledShape], lambda: f64) -> Result<NaiveRrcModel> {
    NaiveRrcModel::fit(train, lambda)
}

pub fn rrc_predict(model: &NaiveRrcModel, u: &Preshape) -> Prediction {
    model.predict(u)
}
