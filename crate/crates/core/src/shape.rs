//! Planar shape geometry.
//!
//! A k-ad `z ∈ ℂᵏ` is reduced to a preshape by removing translation and
//! scale. Rotation is never quotiented out explicitly: every quantity in
//! this crate depends on a preshape only through `|⟨a, b⟩|` or `u u*`,
//! both of which are invariant under `u ↦ e^{iθ} u`, so any member of the
//! rotation orbit serves as the shape's representative.
//!
//! The complex inner product is `⟨a, b⟩ = Σ conj(a_j) b_j` everywhere.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShapeError};

pub type C64 = Complex<f64>;

/// Size below which a centered configuration is treated as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

const CENTER_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-12;
const UNITARY_TOL: f64 = 1e-10;

/// A raw planar landmark configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkConfig {
    points: Vec<C64>,
    pub label: Option<u32>,
    pub id: Option<String>,
}

impl LandmarkConfig {
    pub fn new(points: Vec<C64>) -> Result<Self> {
        if points.len() < 3 {
            return Err(ShapeError::InvalidInput(format!(
                "a planar shape needs at least 3 landmarks, got {}",
                points.len()
            )));
        }
        if let Some(j) = points.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ShapeError::InvalidInput(format!(
                "landmark {} has a non-finite coordinate",
                j + 1
            )));
        }
        Ok(Self {
            points,
            label: None,
            id: None,
        })
    }

    /// Builds a configuration from `(x, y)` pairs.
    pub fn from_xy(xy: &[(f64, f64)]) -> Result<Self> {
        Self::new(xy.iter().map(|&(x, y)| C64::new(x, y)).collect())
    }

    pub fn with_label(mut self, label: u32) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }
}

/// Centered, unit-norm complex k-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Preshape {
    coords: DVector<C64>,
}

impl Preshape {
    /// Centers and scales arbitrary complex coordinates.
    pub fn normalize(points: &[C64]) -> Result<Self> {
        if points.len() < 3 {
            return Err(ShapeError::InvalidInput(format!(
                "a planar shape needs at least 3 landmarks, got {}",
                points.len()
            )));
        }
        if points.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ShapeError::InvalidInput("non-finite coordinate".into()));
        }
        let k = points.len() as f64;
        let mean = points.iter().sum::<C64>() / k;
        let centered = DVector::from_iterator(points.len(), points.iter().map(|z| z - mean));
        let size = centered.norm();
        if size <= DEGENERACY_THRESHOLD {
            return Err(ShapeError::DegenerateConfiguration { size });
        }
        Ok(Self {
            coords: centered.unscale(size),
        })
    }

    /// Wraps coordinates that are already a preshape, checking the
    /// centering and unit-norm invariants.
    pub fn from_coords(coords: Vec<C64>) -> Result<Self> {
        if coords.len() < 3 {
            return Err(ShapeError::InvalidInput(format!(
                "a preshape needs at least 3 entries, got {}",
                coords.len()
            )));
        }
        let v = DVector::from_vec(coords);
        let sum = v.sum().norm();
        if sum.is_nan() || sum > CENTER_TOL {
            return Err(ShapeError::InvalidInput(format!(
                "preshape is not centered (|sum| = {sum:e})"
            )));
        }
        let norm = v.norm();
        if norm.is_nan() || (norm - 1.0).abs() > NORM_TOL {
            return Err(ShapeError::InvalidInput(format!(
                "preshape does not have unit norm (norm = {norm})"
            )));
        }
        Ok(Self { coords: v })
    }

    pub fn coords(&self) -> &DVector<C64> {
        &self.coords
    }

    pub fn k(&self) -> usize {
        self.coords.len()
    }

    /// The same shape with the representative rotated by `theta`.
    pub fn rotated(&self, theta: f64) -> Self {
        let phase = C64::from_polar(1.0, theta);
        Self {
            coords: self.coords.map(|z| z * phase),
        }
    }

    /// Real coordinates `(x1, y1, …, xk, yk)`.
    pub fn to_real(&self) -> Vec<f64> {
        self.coords.iter().flat_map(|z| [z.re, z.im]).collect()
    }

    /// Complex inner product `Σ conj(self_j) other_j`.
    pub fn inner(&self, other: &Preshape) -> C64 {
        self.coords.dotc(&other.coords)
    }

    /// `|⟨self, other⟩|` clamped to `[0, 1]`.
    pub fn overlap(&self, other: &Preshape) -> f64 {
        if self.coords == other.coords {
            return 1.0;
        }
        self.inner(other).norm().clamp(0.0, 1.0)
    }
}

/// Removes translation and scale from a configuration.
pub fn to_preshape(config: &LandmarkConfig) -> Result<Preshape> {
    Preshape::normalize(config.points())
}

/// Image of a shape under the Veronese-Whitney embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedShape {
    matrix: DMatrix<C64>,
}

impl EmbeddedShape {
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Eigenvalues of the Hermitian matrix in decreasing order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

/// Outer product `v v*`.
pub(crate) fn outer(v: &DVector<C64>) -> DMatrix<C64> {
    v * v.adjoint()
}

/// `J([z]) = u u*`.
pub fn vw_embed(u: &Preshape) -> EmbeddedShape {
    EmbeddedShape {
        matrix: outer(&u.coords),
    }
}

/// Geodesic distance `arccos |⟨a, b⟩|`, in `[0, π/2]`.
pub fn riemannian_dist(a: &Preshape, b: &Preshape) -> f64 {
    a.overlap(b).acos()
}

/// Full Procrustes distance `sqrt(1 - |⟨a, b⟩|²)`, in `[0, 1]`.
pub fn full_procrustes_dist(a: &Preshape, b: &Preshape) -> f64 {
    full_procrustes_dist_sq(a, b).sqrt()
}

pub(crate) fn full_procrustes_dist_sq(a: &Preshape, b: &Preshape) -> f64 {
    let c = a.overlap(b);
    (1.0 - c * c).max(0.0)
}

/// Squared partial Procrustes distance `1 - |⟨a, b⟩|`.
pub fn partial_procrustes_dist_sq(a: &Preshape, b: &Preshape) -> f64 {
    1.0 - a.overlap(b)
}

/// Squared extrinsic distance `‖J(a) - J(b)‖²_F = 2 (1 - |⟨a, b⟩|²)`.
pub fn extrinsic_dist_sq(a: &Preshape, b: &Preshape) -> f64 {
    2.0 * full_procrustes_dist_sq(a, b)
}

/// Squared extrinsic distance evaluated as `Trace[(J(a) - J(b))* (J(a) - J(b))]`
/// on the embedded matrices. Quadratic in `k`; [`extrinsic_dist_sq`] is the
/// fast route.
pub fn extrinsic_dist_sq_trace(a: &Preshape, b: &Preshape) -> f64 {
    let d = vw_embed(a).matrix - vw_embed(b).matrix;
    (d.adjoint() * &d).trace().re
}

/// Checks `A` for membership in SU(k) within `1e-10`.
pub fn validate_special_unitary(a: &DMatrix<C64>) -> Result<()> {
    if !a.is_square() {
        return Err(ShapeError::InvalidInput("matrix is not square".into()));
    }
    let n = a.nrows();
    let gram = a * a.adjoint();
    let dev = (gram - DMatrix::<C64>::identity(n, n)).camax();
    if dev.is_nan() || dev > UNITARY_TOL {
        return Err(ShapeError::InvalidInput(format!(
            "matrix is not unitary (max |A A* - I| = {dev:e})"
        )));
    }
    let det = a.clone().determinant();
    let det_dev = (det - C64::new(1.0, 0.0)).norm();
    if det_dev.is_nan() || det_dev > UNITARY_TOL {
        return Err(ShapeError::InvalidInput(format!(
            "determinant is {det}, expected 1"
        )));
    }
    Ok(())
}

/// Largest entrywise deviation `max |J(A u) - A J(u) A*|` for `A ∈ SU(k)`.
pub fn check_equivariance(u: &Preshape, a: &DMatrix<C64>) -> Result<f64> {
    if a.nrows() != u.k() {
        return Err(ShapeError::InvalidInput(format!(
            "matrix is {}x{}, preshape has {} entries",
            a.nrows(),
            a.ncols(),
            u.k()
        )));
    }
    validate_special_unitary(a)?;
    let lhs = outer(&(a * &u.coords));
    let rhs = a * outer(&u.coords) * a.adjoint();
    Ok((lhs - rhs).camax())
}
