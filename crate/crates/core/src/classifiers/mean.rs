use nalgebra::DMatrix;

use crate::error::{Result, ShapeError};
use crate::shape::{outer, Preshape, C64};

const EIGEN_GAP_TOL: f64 = 1e-10;

/// Extrinsic (Veronese-Whitney) mean: the top unit eigenvector of
/// `(1/n) Σ u_i u_i*`.
///
/// The returned representative is rotated so that its largest-modulus entry
/// is real and positive. A single input is returned unchanged.
pub fn extrinsic_mean(shapes: &[Preshape]) -> Result<Preshape> {
    let Some(first) = shapes.first() else {
        return Err(ShapeError::EmptyInput("extrinsic mean of no shapes".into()));
    };
    if shapes.len() == 1 {
        return Ok(first.clone());
    }
    let k = first.k();
    if shapes.iter().any(|s| s.k() != k) {
        return Err(ShapeError::InvalidInput("shapes have different landmark counts".into()));
    }
    let mut m = DMatrix::<C64>::zeros(k, k);
    for s in shapes {
        m += outer(s.coords());
    }
    m /= C64::new(shapes.len() as f64, 0.0);

    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (top, second) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if top - second < EIGEN_GAP_TOL {
        return Err(ShapeError::NonUniqueMean { top, second });
    }
    let v: Vec<C64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
    let u = Preshape::normalize(&v)?;
    let pivot = u
        .coords()
        .iter()
        .enumerate()
        .fold((0, 0.0), |(bi, bm), (i, z)| if z.norm() > bm { (i, z.norm()) } else { (bi, bm) })
        .0;
    Ok(u.rotated(-u.coords()[pivot].arg()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::random_preshape;
    use crate::shape::extrinsic_dist_sq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_shape_is_its_own_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_preshape(6, &mut rng);
        let m = extrinsic_mean(std::slice::from_ref(&u)).unwrap();
        assert_eq!(extrinsic_dist_sq(&m, &u), 0.0);
    }

    #[test]
    fn copies_average_to_the_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_preshape(5, &mut rng);
        let copies = vec![u.clone(), u.rotated(0.3), u.rotated(2.0), u.clone()];
        let m = extrinsic_mean(&copies).unwrap();
        assert!(extrinsic_dist_sq(&m, &u) < 1e-12);
    }

    #[test]
    fn phase_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shapes: Vec<_> = (0..10).map(|_| random_preshape(7, &mut rng)).collect();
        let m = extrinsic_mean(&shapes).unwrap();
        let big = m.coords().iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        assert!(big.im.abs() < 1e-14 && big.re > 0.0);
        assert!(m.coords().sum().norm() < 1e-10);
        assert!((m.coords().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_rotation_and_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shapes: Vec<_> = (0..12).map(|_| random_preshape(5, &mut rng)).collect();
        let base = extrinsic_mean(&shapes).unwrap();
        let mut other: Vec<_> = shapes.iter().enumerate().map(|(i, s)| s.rotated(0.7 * i as f64)).collect();
        other.reverse();
        let m = extrinsic_mean(&other).unwrap();
        assert!((base.coords() - m.coords()).norm() < 1e-10);
    }

    #[test]
    fn orthogonal_pair_has_no_unique_mean() {
        let a = Preshape::normalize(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let b = Preshape::normalize(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(-2.0, 0.0)]).unwrap();
        assert!(matches!(
            extrinsic_mean(&[a, b]),
            Err(ShapeError::NonUniqueMean { .. })
        ));
        assert!(matches!(extrinsic_mean(&[]), Err(ShapeError::EmptyInput(_))));
    }
}
