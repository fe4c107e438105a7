//! Seeded random states, unitaries and probability vectors.

use alloc::vec::Vec;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::operator::{CMatrix, DensityOperator};
#[cfg(test)]
use crate::operator::MaxAbs;

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complex matrix with i.i.d. standard complex Gaussian entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
    })
}

pub fn gaussian_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<Complex64> {
    gaussian_matrix(dim, 1, rng).column(0).into_owned()
}

/// Random Hermitian matrix `(G + G†)/2`.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = gaussian_matrix(dim, dim, rng);
    (&g + g.adjoint()) * Complex64::from(0.5)
}

/// `G G† / tr(G G†)` with `G` a `dim × rank` complex Gaussian matrix.
pub fn random_density_with_rank<R: Rng + ?Sized>(
    dim: usize,
    rank: usize,
    rng: &mut R,
) -> DensityOperator {
    let g = gaussian_matrix(dim, rank.max(1), rng);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityOperator::new(m / Complex64::from(tr)).expect("Wishart sample is a density operator")
}

/// Full-rank (almost surely) random density operator.
pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityOperator {
    random_density_with_rank(dim, dim, rng)
}

pub fn random_pure<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityOperator {
    random_density_with_rank(dim, 1, rng)
}

/// Unitary from orthonormalizing a Gaussian matrix; each column is rotated so
/// that its first nonzero entry is real and positive.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = gaussian_matrix(dim, dim, rng);
    let mut q = g.qr().q();
    for mut col in q.column_iter_mut() {
        if let Some(first) = col.iter().find(|z| z.norm() > 1e-12).copied() {
            let phase = first.conj() / first.norm();
            for z in col.iter_mut() {
                *z *= phase;
            }
        }
    }
    q
}

/// Probability vector with every entry at least `floor` (before renormalization).
pub fn random_probabilities<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor + rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_draws_are_reproducible() {
        let a = random_unitary(4, &mut rng(11));
        let b = random_unitary(4, &mut rng(11));
        assert_eq!(a, b);
        let c = random_unitary(4, &mut rng(12));
        assert_ne!(a, c);
    }

    #[test]
    fn unitary_is_unitary_with_fixed_phases() {
        let u = random_unitary(5, &mut rng(3));
        let defect = (u.adjoint() * &u - CMatrix::identity(5, 5)).max_abs();
        assert!(defect < 1e-12);
        for col in u.column_iter() {
            let first = col.iter().find(|z| z.norm() > 1e-12).unwrap();
            assert!(first.im.abs() < 1e-14 && first.re > 0.0);
        }
    }

    #[test]
    fn random_density_is_full_rank() {
        let rho = random_density(4, &mut rng(5));
        let min = crate::operator::hermitian_eig(rho.matrix()).unwrap().values[0];
        assert!(min > 1e-6);
        let pure = random_pure(3, &mut rng(5));
        let sq = pure.matrix() * pure.matrix();
        assert!((sq - pure.matrix()).max_abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let p = random_probabilities(4, 0.1, &mut rng(9));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|&x| x > 0.0));
    }
}
