//! Random shapes and random special unitary matrices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::shape::{Preshape, C64};

/// Standard complex Gaussian: independent N(0, 1) real and imaginary parts.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Preshape of a configuration with i.i.d. complex Gaussian landmarks.
pub fn random_preshape<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Preshape {
    loop {
        let z: Vec<C64> = (0..k).map(|_| complex_gaussian(rng)).collect();
        if let Ok(u) = Preshape::normalize(&z) {
            return u;
        }
    }
}

pub fn random_complex_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

pub fn random_complex_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<C64> {
    DVector::from_fn(n, |_, _| complex_gaussian(rng))
}

/// Draws a matrix in SU(k): QR of a complex Gaussian matrix, with the
/// phases of diag(R) moved into Q, then the last column divided by det(Q).
pub fn random_special_unitary<R: Rng + ?Sized>(k: usize, rng: &mut R) -> DMatrix<C64> {
    let qr = random_complex_matrix(k, k, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    let det = q.clone().determinant();
    let det = det / det.norm();
    let mut last = q.column_mut(k - 1);
    last /= det;
    q
}
