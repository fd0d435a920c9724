//! Shared fixture generators for the integration suites.
#![allow(dead_code)]

use fairopt::data::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random regression dataset whose protected column is correlated with the
/// first predictor: z = x₁ + noise_scale·ν (continuous z).
pub fn correlated_regression(
    n: usize,
    p: usize,
    noise_scale: f64,
    weights: &[f64],
    y_noise: f64,
    seed: u64,
) -> Dataset {
    let mut r = rng(seed);
    let x = DMatrix::from_fn(n, p, |_, _| normal(&mut r));
    let z = DMatrix::from_fn(n, 1, |i, _| x[(i, 0)] + noise_scale * normal(&mut r));
    let y = DVector::from_fn(n, |i, _| {
        let mut s = 0.0;
        for j in 0..p {
            s += weights[j] * x[(i, j)];
        }
        s + y_noise * normal(&mut r)
    });
    Dataset::from_parts(x, y, z).unwrap()
}

/// Random binary-protected classification dataset: the first predictor is
/// shifted by the group, so scores correlate with z unless constrained.
pub fn binary_classification(n: usize, p: usize, shift: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let z = DMatrix::from_fn(n, 1, |_, _| if r.random::<bool>() { 1.0 } else { 0.0 });
    let x = DMatrix::from_fn(n, p, |i, j| {
        let base: f64 = normal(&mut r);
        if j == 0 {
            base + shift * z[(i, 0)]
        } else {
            base
        }
    });
    let y = DVector::from_fn(n, |i, _| {
        let margin: f64 = x[(i, 0)] + 0.5 * x[(i, p.min(2) - 1)] + 0.3 * normal(&mut r);
        if margin > 0.0 {
            1.0
        } else {
            -1.0
        }
    });
    Dataset::from_parts(x, y, z).unwrap()
}

/// Exact least-squares objective via the normal equations (test oracle).
pub fn ols_objective(omega: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let gram = omega.transpose() * omega;
    let beta = gram
        .lu()
        .solve(&(omega.transpose() * y))
        .expect("full-rank fixture");
    let resid = y - omega * beta;
    resid.norm_squared() / y.len() as f64
}

/// Exact 1-D piecewise-linear minimum over breakpoints and ball endpoints
/// (test oracle for hinge and pinball with a single feature).
pub fn piecewise_1d_min(objective: impl Fn(f64) -> f64, breakpoints: &[f64], bound: f64) -> f64 {
    let mut best = f64::INFINITY;
    for &b in breakpoints.iter().chain([-bound, bound].iter()) {
        if b.abs() <= bound + 1e-12 {
            best = best.min(objective(b));
        }
    }
    best
}
