//! Deterministic random-instance generators shared by the test suites.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::symmat::spectral_radius;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

pub fn random_symmetric(r: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(r, n, n);
    (&m + m.transpose()) * 0.5
}

/// Random symmetric positive definite matrix with eigenvalues bounded away
/// from zero.
pub fn random_pd(r: &mut impl Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(r, n, n);
    &m * m.transpose() + DMatrix::identity(n, n) * 0.1
}

/// Random square matrix rescaled to the requested spectral radius.
pub fn random_stable(r: &mut impl Rng, n: usize, target_radius: f64) -> DMatrix<f64> {
    loop {
        let m = random_matrix(r, n, n);
        let sr = spectral_radius(&m);
        if sr > 1e-6 {
            return m * (target_radius / sr);
        }
    }
}
