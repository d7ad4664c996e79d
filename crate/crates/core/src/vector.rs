//! Small dense-vector helpers over `Complex64` slices.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sparse::ZERO;

/// `⟨a, b⟩`, conjugate-linear in `a`.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    norm_sqr(a).sqrt()
}

/// `y += c x`.
pub fn axpy(c: Complex64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn scale(c: Complex64, x: &mut [Complex64]) {
    for xi in x {
        *xi *= c;
    }
}

/// `‖a − b‖`.
pub fn distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Normalize in place and return the original norm.
pub fn normalize(x: &mut [Complex64]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        scale(Complex64::new(1.0 / n, 0.0), x);
    }
    n
}

/// Deterministic start vector with entries uniform in `[-1, 1]`; the
/// imaginary parts are zero when `real` is set.
pub fn seeded_vector(dim: usize, seed: u64, real: bool) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| {
            let re = rng.random_range(-1.0..1.0);
            let im = if real { 0.0 } else { rng.random_range(-1.0..1.0) };
            Complex64::new(re, im)
        })
        .collect()
}

pub fn zeros(dim: usize) -> Vec<Complex64> {
    vec![ZERO; dim]
}
