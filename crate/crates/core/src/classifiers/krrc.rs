use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use super::{argmin, check_lambda, group_by_class, Classifier, LabeledShape, Prediction};
use crate::error::{Result, ShapeError};
use crate::kernels::{kernel_matrix, kernel_vector, min_symmetric_eigenvalue, KernelSpec, ShapeKernel};
use crate::shape::Preshape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KrrcOptions {
    /// Solve with a pivoted LU when `K + λI` is not positive definite
    /// instead of failing.
    pub allow_indefinite: bool,
    /// Add `κ(u, u)` to every score so it equals the squared feature-space
    /// residual. Does not change the argmin.
    pub include_self_term: bool,
}

#[derive(Debug, Clone)]
enum Solver {
    Cholesky(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Solver {
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Solver::Cholesky(c) => c.solve(b),
            Solver::Lu(lu) => lu.solve(b).unwrap_or_else(|| DVector::from_element(b.len(), f64::NAN)),
        }
    }
}

#[derive(Debug, Clone)]
struct ClassModel {
    shapes: Vec<Preshape>,
    gram: DMatrix<f64>,
    solver: Solver,
}

/// Kernel ridge-regression classifier.
///
/// For class `i` with Gram matrix `K` and query kernel vector `k`, the score
/// is `kᵀ (K + λI)⁻¹ (-K - 2λI) (K + λI)⁻¹ k`, i.e. the squared distance
/// between `Φ(u)` and its ridge projection onto the class feature span,
/// minus the constant `‖Φ(u)‖²`. Scores can be negative.
#[derive(Debug, Clone)]
pub struct KrrcModel<K = KernelSpec> {
    kernel: K,
    lambda: f64,
    options: KrrcOptions,
    class_labels: Vec<u32>,
    classes: Vec<ClassModel>,
}

impl KrrcModel<KernelSpec> {
    pub fn fit(train: &[LabeledShape], kernel: KernelSpec, lambda: f64) -> Result<Self> {
        Self::fit_with(train, None, kernel, lambda, KrrcOptions::default())
    }
}

impl<K: ShapeKernel> KrrcModel<K> {
    /// Fits with an arbitrary kernel. With `classes` given, each listed class
    /// must have training data.
    pub fn fit_with(
        train: &[LabeledShape],
        classes: Option<&[u32]>,
        kernel: K,
        lambda: f64,
        options: KrrcOptions,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        let (class_labels, groups) = group_by_class(train, classes)?;
        let mut fitted = Vec::with_capacity(groups.len());
        for (&label, shapes) in class_labels.iter().zip(groups) {
            let gram = kernel_matrix(&kernel, &shapes);
            let mut system = gram.clone();
            for i in 0..system.nrows() {
                system[(i, i)] += lambda;
            }
            let solver = match Cholesky::new(system.clone()) {
                Some(c) => Solver::Cholesky(c),
                None => {
                    let min_eigenvalue = min_symmetric_eigenvalue(&gram);
                    if !options.allow_indefinite {
                        return Err(ShapeError::FactorizationFailure {
                            label,
                            min_eigenvalue,
                            lambda,
                        });
                    }
                    debug!(
                        "class {label}: K + lambda I is indefinite (Gram min eigenvalue {min_eigenvalue:e}, \
                         lambda {lambda:e}); using LU solve"
                    );
                    Solver::Lu(system.lu())
                }
            };
            fitted.push(ClassModel {
                shapes,
                gram,
                solver,
            });
        }
        Ok(Self {
            kernel,
            lambda,
            options,
            class_labels,
            classes: fitted,
        })
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn options(&self) -> KrrcOptions {
        self.options
    }

    /// True if any class fell back to the indefinite solve.
    pub fn used_indefinite_fallback(&self) -> bool {
        self.classes.iter().any(|c| matches!(c.solver, Solver::Lu(_)))
    }

    pub fn class_shapes(&self) -> impl Iterator<Item = (u32, &[Preshape])> {
        self.class_labels
            .iter()
            .copied()
            .zip(self.classes.iter().map(|c| c.shapes.as_slice()))
    }

    pub fn gram(&self, class_index: usize) -> &DMatrix<f64> {
        &self.classes[class_index].gram
    }

    fn score(&self, class: &ClassModel, u: &Preshape) -> f64 {
        let k = kernel_vector(&self.kernel, &class.shapes, u);
        let beta = class.solver.solve(&k);
        // (-K - 2λI) β
        let mut middle = &class.gram * &beta;
        middle.neg_mut();
        middle.axpy(-2.0 * self.lambda, &beta, 1.0);
        let s = beta.dot(&middle);
        if self.options.include_self_term {
            s + self.kernel.eval(u, u)
        } else {
            s
        }
    }
}

impl<K: ShapeKernel> Classifier for KrrcModel<K> {
    fn class_labels(&self) -> &[u32] {
        &self.class_labels
    }

    fn predict(&self, u: &Preshape) -> Prediction {
        let scores: Vec<f64> = self.classes.iter().map(|c| self.score(c, u)).collect();
        Prediction {
            label: self.class_labels[argmin(&scores)],
            per_class_scores: scores,
        }
    }
}

pub fn krrc_fit(train: &[LabeledShape], kernel: KernelSpec, lambda: f64) -> Result<KrrcModel> {
    KrrcModel::fit(train, kernel, lambda)
}

pub fn krrc_predict<K: ShapeKernel>(model: &KrrcModel<K>, u: &Preshape) -> Prediction {
    model.predict(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{find_psd_violation, KernelFamily};
    use crate::sampling::random_preshape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vwg(s: f64) -> KernelSpec {
        KernelSpec::new(KernelFamily::Vwg, s).unwrap()
    }

    fn random_train(rng: &mut ChaCha8Rng, k: usize, classes: u32, per_class: usize) -> Vec<LabeledShape> {
        (0..classes)
            .flat_map(|c| (0..per_class).map(move |j| (c, j)))
            .map(|(c, j)| LabeledShape::new(format!("{c}-{j}"), c, random_preshape(k, rng)))
            .collect()
    }

    #[test]
    fn vwg_fit_succeeds_for_any_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let train = random_train(&mut rng, 4, 3, 15);
        for lambda in [1e-12, 1e-6, 1e-2, 1.0, 100.0] {
            for s in [0.01, 1.0, 100.0] {
                let m = krrc_fit(&train, vwg(s), lambda).unwrap();
                assert!(!m.used_indefinite_fallback());
            }
        }
    }

    #[test]
    fn single_sample_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train = random_train(&mut rng, 5, 2, 1);
        let lambda = 0.25;
        let m = krrc_fit(&train, vwg(0.5), lambda).unwrap();
        assert_eq!(m.gram(0), &DMatrix::from_element(1, 1, 1.0));
        // 1x1 case: score = kappa^2 (1 + lambda)^-2 (-1 - 2 lambda)
        let u = random_preshape(5, &mut rng);
        let p = m.predict(&u);
        for (i, (_, shapes)) in m.class_shapes().enumerate() {
            let kappa = m.kernel().eval(&shapes[0], &u);
            let expected = kappa * kappa * (-1.0 - 2.0 * lambda) / (1.0 + lambda).powi(2);
            assert!((p.per_class_scores[i] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn single_class_always_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train: Vec<_> = random_train(&mut rng, 4, 1, 6)
            .into_iter()
            .map(|mut s| {
                s.label = 4;
                s
            })
            .collect();
        let m = krrc_fit(&train, vwg(1.0), 0.1).unwrap();
        for _ in 0..10 {
            assert_eq!(krrc_predict(&m, &random_preshape(4, &mut rng)).label, 4);
        }
    }

    #[test]
    fn self_term_shifts_scores_by_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let train = random_train(&mut rng, 4, 2, 5);
        let plain = krrc_fit(&train, vwg(0.3), 0.1).unwrap();
        let shifted = KrrcModel::fit_with(
            &train,
            None,
            vwg(0.3),
            0.1,
            KrrcOptions {
                include_self_term: true,
                ..Default::default()
            },
        )
        .unwrap();
        let u = random_preshape(4, &mut rng);
        let (a, b) = (plain.predict(&u), shifted.predict(&u));
        assert_eq!(a.label, b.label);
        for (x, y) in a.per_class_scores.iter().zip(&b.per_class_scores) {
            assert!((y - x - 1.0).abs() < 1e-12);
            // squared residual is non-negative
            assert!(*y >= -1e-12);
        }
    }

    #[test]
    fn prediction_is_phase_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train = random_train(&mut rng, 5, 3, 8);
        let m = krrc_fit(&train, vwg(0.4), 0.01).unwrap();
        for i in 0..20 {
            let u = random_preshape(5, &mut rng);
            let a = m.predict(&u);
            let b = m.predict(&u.rotated(1.3 * i as f64));
            assert_eq!(a.label, b.label);
            for (x, y) in a.per_class_scores.iter().zip(&b.per_class_scores) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn indefinite_gram_fails_or_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pool: Vec<_> = (0..60).map(|_| random_preshape(3, &mut rng)).collect();
        let witness = find_psd_violation(
            KernelFamily::IntrinsicGaussian,
            &pool,
            &[0.5, 1.0, 2.0, 5.0],
            40,
            500,
            &mut rng,
        )
        .expect("intrinsic Gaussian witness on spread-out triangles");
        let m = -witness.min_eigenvalue;
        let train: Vec<_> = witness
            .indices
            .iter()
            .map(|&i| LabeledShape::new(i.to_string(), 0, pool[i].clone()))
            .collect();
        let spec = KernelSpec::new(KernelFamily::IntrinsicGaussian, witness.sigma_sq).unwrap();
        let lambda = m / 4.0;
        match krrc_fit(&train, spec, lambda) {
            Err(ShapeError::FactorizationFailure {
                label,
                min_eigenvalue,
                ..
            }) => {
                assert_eq!(label, 0);
                assert!((min_eigenvalue - witness.min_eigenvalue).abs() < 1e-9);
            }
            other => panic!("expected factorization failure, got {other:?}"),
        }
        let fallback = KrrcModel::fit_with(
            &train,
            None,
            spec,
            lambda,
            KrrcOptions {
                allow_indefinite: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fallback.used_indefinite_fallback());
        assert!(fallback.predict(&pool[0]).per_class_scores[0].is_finite());
    }
}
