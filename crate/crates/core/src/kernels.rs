//! Gaussian kernels on shape space and positive-definiteness diagnostics.
//!
//! All four families have the form `exp(-d²(a, b) / σ²)`; they differ in the
//! squared distance:
//!
//! | family | `d²` |
//! |---|---|
//! | `Vwg` | squared extrinsic (Veronese-Whitney) distance `2 (1 - |⟨a,b⟩|²)` |
//! | `Fpg` | squared full Procrustes distance `1 - |⟨a,b⟩|²` |
//! | `IntrinsicGaussian` | squared geodesic distance `arccos²|⟨a,b⟩|` |
//! | `EuclideanGaussian` | `‖a - b‖²` on the raw preshape coordinates |
//!
//! The squared extrinsic distance is of negative type, so the VWG Gram
//! matrix is positive semidefinite for every bandwidth. The geodesic
//! distance is not, and [`find_psd_violation`] searches for Gram matrices
//! that show it.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};
use crate::shape::{extrinsic_dist_sq, full_procrustes_dist_sq, riemannian_dist, Preshape};

/// Smallest eigenvalue a Gram matrix may have and still count as PSD.
pub const PSD_TOLERANCE: f64 = -1e-8;

/// Minimum eigenvalue below which a Gram matrix is reported as a violation.
pub const VIOLATION_THRESHOLD: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    #[serde(rename = "vwg")]
    Vwg,
    #[serde(rename = "fpg")]
    Fpg,
    #[serde(rename = "rie")]
    IntrinsicGaussian,
    #[serde(rename = "euclidean")]
    EuclideanGaussian,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Vwg,
        KernelFamily::Fpg,
        KernelFamily::IntrinsicGaussian,
        KernelFamily::EuclideanGaussian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Vwg => "vwg",
            KernelFamily::Fpg => "fpg",
            KernelFamily::IntrinsicGaussian => "rie",
            KernelFamily::EuclideanGaussian => "euclidean",
        }
    }

    /// The squared distance this family exponentiates.
    pub fn dist_sq(self, a: &Preshape, b: &Preshape) -> f64 {
        match self {
            KernelFamily::Vwg => extrinsic_dist_sq(a, b),
            KernelFamily::Fpg => full_procrustes_dist_sq(a, b),
            KernelFamily::IntrinsicGaussian => {
                let r = riemannian_dist(a, b);
                r * r
            }
            KernelFamily::EuclideanGaussian => (a.coords() - b.coords()).norm_squared(),
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelFamily {
    type Err = ShapeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vwg" => Ok(KernelFamily::Vwg),
            "fpg" => Ok(KernelFamily::Fpg),
            "rie" | "intrinsic" => Ok(KernelFamily::IntrinsicGaussian),
            "euclidean" => Ok(KernelFamily::EuclideanGaussian),
            other => Err(ShapeError::InvalidInput(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Kernel family plus bandwidth `σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth_sq: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth_sq: f64) -> Result<Self> {
        if !(bandwidth_sq > 0.0 && bandwidth_sq.is_finite()) {
            return Err(ShapeError::InvalidInput(format!(
                "bandwidth sigma^2 must be positive and finite, got {bandwidth_sq}"
            )));
        }
        Ok(Self {
            family,
            bandwidth_sq,
        })
    }
}

/// A real-valued kernel on preshapes.
pub trait ShapeKernel {
    fn eval(&self, a: &Preshape, b: &Preshape) -> f64;
}

impl ShapeKernel for KernelSpec {
    fn eval(&self, a: &Preshape, b: &Preshape) -> f64 {
        kernel_eval(self, a, b)
    }
}

impl<K: ShapeKernel + ?Sized> ShapeKernel for &K {
    fn eval(&self, a: &Preshape, b: &Preshape) -> f64 {
        (**self).eval(a, b)
    }
}

pub fn kernel_eval(spec: &KernelSpec, a: &Preshape, b: &Preshape) -> f64 {
    (-spec.family.dist_sq(a, b) / spec.bandwidth_sq).exp()
}

/// Symmetric matrix of pairwise kernel values.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub spec: KernelSpec,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Pairwise kernel values for any [`ShapeKernel`]. Only the upper triangle
/// is evaluated.
pub fn kernel_matrix<K: ShapeKernel + ?Sized>(kernel: &K, shapes: &[Preshape]) -> DMatrix<f64> {
    let n = shapes.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&shapes[i], &shapes[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Kernel values between every shape in `rows` and `query`.
pub fn kernel_vector<K: ShapeKernel + ?Sized>(kernel: &K, rows: &[Preshape], query: &Preshape) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|s| kernel.eval(s, query)))
}

pub fn gram(spec: &KernelSpec, shapes: &[Preshape]) -> Result<GramMatrix> {
    if shapes.is_empty() {
        return Err(ShapeError::EmptyInput("gram needs at least one shape".into()));
    }
    Ok(GramMatrix {
        values: kernel_matrix(spec, shapes),
        spec: *spec,
    })
}

/// Smallest eigenvalue of a real symmetric matrix (dense solve).
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::NAN;
    }
    m.clone().symmetric_eigenvalues().min()
}

pub fn min_eigenvalue(g: &GramMatrix) -> f64 {
    min_symmetric_eigenvalue(&g.values)
}

pub fn is_psd(g: &GramMatrix) -> bool {
    min_eigenvalue(g) >= PSD_TOLERANCE
}

/// Largest value of `Σ α_i α_j d²(x_i, x_j)` over random zero-sum
/// coefficient vectors.
///
/// Each trial draws Gaussian `α`, subtracts its mean and scales it to unit
/// Euclidean norm, so the result is comparable across set sizes. A
/// positive value certifies that `d²` is not of negative type.
pub fn check_negative_type<F, R>(dist_sq: F, shapes: &[Preshape], trials: usize, rng: &mut R) -> Result<f64>
where
    F: Fn(&Preshape, &Preshape) -> f64,
    R: Rng + ?Sized,
{
    if shapes.len() < 2 {
        return Err(ShapeError::InvalidInput(
            "negative-type check needs at least 2 shapes".into(),
        ));
    }
    if trials == 0 {
        return Err(ShapeError::InvalidInput("trials must be at least 1".into()));
    }
    let d = distance_matrix(&dist_sq, shapes);
    let n = shapes.len();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let mut alpha = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mean = alpha.mean();
        alpha.add_scalar_mut(-mean);
        let norm = alpha.norm();
        if norm > 0.0 {
            alpha /= norm;
        }
        worst = worst.max(zero_sum_form(&d, &alpha));
    }
    Ok(worst)
}

/// `αᵀ D α`.
pub fn zero_sum_form(d: &DMatrix<f64>, alpha: &DVector<f64>) -> f64 {
    alpha.dot(&(d * alpha))
}

/// Exact supremum of `αᵀ D α` over unit-norm zero-sum `α`: the top
/// eigenvalue of `P D P` with `P = I - 𝟙𝟙ᵀ/n`.
pub fn negative_type_defect<F>(dist_sq: F, shapes: &[Preshape]) -> Result<(f64, DVector<f64>)>
where
    F: Fn(&Preshape, &Preshape) -> f64,
{
    if shapes.len() < 2 {
        return Err(ShapeError::InvalidInput(
            "negative-type check needs at least 2 shapes".into(),
        ));
    }
    let n = shapes.len();
    let d = distance_matrix(&dist_sq, shapes);
    let p = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let eig = (&p * d * &p).symmetric_eigen();
    // the constant vector is an eigenvector of PDP with eigenvalue 0; skip it
    let mut best: Option<(f64, DVector<f64>)> = None;
    for (i, &val) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i).into_owned();
        if v.sum().abs() > 1e-6 * (n as f64).sqrt() {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| val > *b) {
            best = Some((val, v));
        }
    }
    best.ok_or_else(|| ShapeError::InvalidInput("no zero-sum eigenvector found".into()))
}

fn distance_matrix<F>(dist_sq: &F, shapes: &[Preshape]) -> DMatrix<f64>
where
    F: Fn(&Preshape, &Preshape) -> f64,
{
    let n = shapes.len();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist_sq(&shapes[i], &shapes[j]);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// A shape subset and bandwidth whose Gram matrix is not PSD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdWitness {
    /// Indices into the searched pool.
    pub indices: Vec<usize>,
    pub sigma_sq: f64,
    pub min_eigenvalue: f64,
}

/// Randomized search for a Gram matrix with min eigenvalue below
/// [`VIOLATION_THRESHOLD`]. Returns `None` when no witness turns up.
pub fn find_psd_violation<R: Rng + ?Sized>(
    family: KernelFamily,
    shape_pool: &[Preshape],
    sigma_grid: &[f64],
    subset_size: usize,
    attempts: usize,
    rng: &mut R,
) -> Option<PsdWitness> {
    if subset_size < 2 || shape_pool.len() <= subset_size || sigma_grid.is_empty() {
        return None;
    }
    for _ in 0..attempts {
        let mut indices = index::sample(rng, shape_pool.len(), subset_size).into_vec();
        indices.sort_unstable();
        let sigma_sq = sigma_grid[rng.random_range(0..sigma_grid.len())];
        let Ok(spec) = KernelSpec::new(family, sigma_sq) else {
            continue;
        };
        let subset: Vec<Preshape> = indices.iter().map(|&i| shape_pool[i].clone()).collect();
        let min_eig = min_symmetric_eigenvalue(&kernel_matrix(&spec, &subset));
        if min_eig < VIOLATION_THRESHOLD {
            return Some(PsdWitness {
                indices,
                sigma_sq,
                min_eigenvalue: min_eig,
            });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_preshape;
    use crate::shape::{vw_embed, C64};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn orthogonal_pair() -> (Preshape, Preshape) {
        let a = Preshape::normalize(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let b = Preshape::normalize(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(-2.0, 0.0)]).unwrap();
        (a, b)
    }

    #[test]
    fn self_similarity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_preshape(6, &mut rng);
        for family in KernelFamily::ALL {
            let spec = KernelSpec::new(family, 0.3).unwrap();
            assert_eq!(kernel_eval(&spec, &a, &a), 1.0);
        }
    }

    #[test]
    fn vwg_at_orthogonality() {
        let (a, b) = orthogonal_pair();
        let spec = KernelSpec::new(KernelFamily::Vwg, 2.0).unwrap();
        assert!((kernel_eval(&spec, &a, &b) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn vwg_matches_fpg_at_half_bandwidth() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..1000 {
            let a = random_preshape(3 + i % 10, &mut rng);
            let b = random_preshape(3 + i % 10, &mut rng);
            let s = 0.01 + (i as f64) * 0.05;
            let vwg = KernelSpec::new(KernelFamily::Vwg, s).unwrap();
            let fpg = KernelSpec::new(KernelFamily::Fpg, s / 2.0).unwrap();
            assert!((kernel_eval(&vwg, &a, &b) - kernel_eval(&fpg, &a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_is_increasing_in_bandwidth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_preshape(5, &mut rng);
        let b = random_preshape(5, &mut rng);
        for family in KernelFamily::ALL {
            let mut prev = 0.0;
            for s in [0.05, 0.1, 0.5, 1.0, 2.0, 10.0] {
                let v = kernel_eval(&KernelSpec::new(family, s).unwrap(), &a, &b);
                assert!(v > prev && v <= 1.0);
                prev = v;
            }
        }
    }

    #[test]
    fn rejects_non_positive_bandwidth() {
        assert!(KernelSpec::new(KernelFamily::Vwg, 0.0).is_err());
        assert!(KernelSpec::new(KernelFamily::Vwg, -1.0).is_err());
        assert!(KernelSpec::new(KernelFamily::Vwg, f64::NAN).is_err());
    }

    #[test]
    fn gram_small_cases() {
        let (a, b) = orthogonal_pair();
        let spec = KernelSpec::new(KernelFamily::Vwg, 2.0).unwrap();
        let g1 = gram(&spec, std::slice::from_ref(&a)).unwrap();
        assert_eq!(g1.values, DMatrix::from_element(1, 1, 1.0));
        let g2 = gram(&spec, &[a, b]).unwrap();
        let e = (-1.0f64).exp();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, e, e, 1.0]);
        assert!((g2.values - expected).amax() < 1e-12);
        assert!(matches!(gram(&spec, &[]), Err(ShapeError::EmptyInput(_))));
    }

    #[test]
    fn gram_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shapes: Vec<_> = (0..10).map(|_| random_preshape(7, &mut rng)).collect();
        for family in KernelFamily::ALL {
            let spec = KernelSpec::new(family, 0.7).unwrap();
            let g = gram(&spec, &shapes).unwrap();
            for (i, a) in shapes.iter().enumerate() {
                for (j, b) in shapes.iter().enumerate() {
                    assert_eq!(g.values[(i, j)], kernel_eval(&spec, a, b));
                }
            }
            assert_eq!(g.values, g.values.transpose());
            assert!(g.values.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }

    #[test]
    fn near_orthogonal_shapes_give_near_identity_gram() {
        // standard basis directions projected to the centered subspace,
        // tiny bandwidth: off-diagonals vanish
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shapes: Vec<_> = (0..8).map(|_| random_preshape(30, &mut rng)).collect();
        let g = gram(&KernelSpec::new(KernelFamily::Vwg, 0.05).unwrap(), &shapes).unwrap();
        assert!((min_eigenvalue(&g) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn vwg_gram_is_psd_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let shapes: Vec<_> = (0..50).map(|_| random_preshape(4, &mut rng)).collect();
        for s in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let g = gram(&KernelSpec::new(KernelFamily::Vwg, s).unwrap(), &shapes).unwrap();
            assert!(min_eigenvalue(&g) >= PSD_TOLERANCE, "sigma^2 = {s}");
        }
    }

    #[test]
    fn negative_type_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shapes: Vec<_> = (0..5).map(|_| random_preshape(4, &mut rng)).collect();
        let d = distance_matrix(&extrinsic_dist_sq, &shapes);
        assert_eq!(zero_sum_form(&d, &DVector::zeros(5)), 0.0);
        assert!(check_negative_type(extrinsic_dist_sq, &shapes[..1], 10, &mut rng).is_err());
        assert!(check_negative_type(extrinsic_dist_sq, &shapes, 0, &mut rng).is_err());
    }

    #[test]
    fn extrinsic_quadratic_form_matches_frobenius_identity() {
        // sum a_i a_j rho_E^2(i, j) = -2 || sum a_i J(u_i) ||_F^2 for zero-sum a
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let shapes: Vec<_> = (0..12).map(|_| random_preshape(5, &mut rng)).collect();
        let d = distance_matrix(&extrinsic_dist_sq, &shapes);
        for _ in 0..50 {
            let mut alpha = DVector::from_fn(12, |_, _| rng.sample::<f64, _>(StandardNormal));
            let m = alpha.mean();
            alpha.add_scalar_mut(-m);
            let mut acc = DMatrix::<C64>::zeros(5, 5);
            for (a, u) in alpha.iter().zip(&shapes) {
                acc += vw_embed(u).matrix() * C64::new(*a, 0.0);
            }
            let oracle = -2.0 * acc.norm_squared();
            assert!((zero_sum_form(&d, &alpha) - oracle).abs() < 1e-10);
        }
        let worst = check_negative_type(extrinsic_dist_sq, &shapes, 1000, &mut rng).unwrap();
        assert!(worst <= 1e-8);
        let (defect, _) = negative_type_defect(extrinsic_dist_sq, &shapes).unwrap();
        assert!(defect <= 1e-8);
    }

    #[test]
    fn geodesic_distance_is_not_negative_type() {
        // spread-out triangles (k = 3, shape space is a sphere)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let shapes: Vec<_> = (0..40).map(|_| random_preshape(3, &mut rng)).collect();
        let rie = |a: &Preshape, b: &Preshape| KernelFamily::IntrinsicGaussian.dist_sq(a, b);
        let (defect, alpha) = negative_type_defect(rie, &shapes).unwrap();
        assert!(defect > 1e-6, "defect {defect}");
        assert!(alpha.sum().abs() < 1e-8);
    }

    #[test]
    fn witness_search_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pool: Vec<_> = (0..10).map(|_| random_preshape(3, &mut rng)).collect();
        assert!(find_psd_violation(KernelFamily::IntrinsicGaussian, &pool, &[1.0], 1, 100, &mut rng).is_none());
        assert!(find_psd_violation(KernelFamily::IntrinsicGaussian, &pool, &[1.0], 10, 100, &mut rng).is_none());
        assert!(find_psd_violation(KernelFamily::Vwg, &pool, &[0.1, 1.0, 10.0], 6, 2000, &mut rng).is_none());
    }

    #[test]
    fn family_names_round_trip() {
        for f in KernelFamily::ALL {
            assert_eq!(f.as_str().parse::<KernelFamily>().unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.as_str()));
        }
        assert!("poly".parse::<KernelFamily>().is_err());
    }
}
