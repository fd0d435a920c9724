//! Fair hypothesis testing for the mean of a correlated bivariate normal.
//!
//! The traditional two-sided test of H₀: E(Ξ) = 0 uses
//! `p = 2Φ(−√n·|mean(Ξ)|)`. When a correlated variable Ψ with known
//! correlation ρ is available, the fair test uses the decorrelated statistic
//! `p = 2Φ(−√(n/(1−ρ²))·|mean(Ξ − ρΨ)|)`, whose score is independent of Ψ
//! under the model and which has strictly greater power for ρ ≠ 0.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisTestResult {
    pub p_traditional: f64,
    pub p_fair: f64,
    pub reject_traditional: bool,
    pub reject_fair: bool,
    pub significance: f64,
}

/// Compute both p-values and the reject/accept decisions at level `a`.
pub fn fair_hypothesis_test(xi: &[f64], psi: &[f64], rho: f64, a: f64) -> Result<HypothesisTestResult> {
    let n = xi.len();
    if n == 0 {
        return Err(Error::Parameter("hypothesis test needs n >= 1".into()));
    }
    if psi.len() != n {
        return Err(Error::Shape("xi and psi have different lengths".into()));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::Parameter(format!("|rho| must be < 1, got {rho}")));
    }
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::Parameter(format!("significance must lie in (0,1), got {a}")));
    }
    let nf = n as f64;
    let mean_xi = xi.iter().sum::<f64>() / nf;
    let mean_adj = xi.iter().zip(psi).map(|(x, p)| x - rho * p).sum::<f64>() / nf;
    let p_traditional = 2.0 * phi(-nf.sqrt() * mean_xi.abs());
    let p_fair = 2.0 * phi(-(nf / (1.0 - rho * rho)).sqrt() * mean_adj.abs());
    Ok(HypothesisTestResult {
        p_traditional,
        p_fair,
        reject_traditional: p_traditional < a,
        reject_fair: p_fair < a,
        significance: a,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub size_traditional: f64,
    pub size_fair: f64,
    pub power_traditional: f64,
    pub power_fair: f64,
    pub trials: usize,
}

/// Monte-Carlo size (under H₀) and power (under the mean shift `mu_alt`)
/// of both tests on correlated bivariate-normal samples of length `n`.
pub fn simulate_test_power(
    rho: f64,
    mu_alt: f64,
    n: usize,
    trials: usize,
    a: f64,
    seed: u64,
) -> Result<PowerEstimate> {
    if trials < 10_000 {
        return Err(Error::Parameter(format!(
            "power simulation needs at least 10^4 trials, got {trials}"
        )));
    }
    if n == 0 {
        return Err(Error::Parameter("sample size must be >= 1".into()));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::Parameter(format!("|rho| must be < 1, got {rho}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |mu: f64, rng: &mut ChaCha8Rng| -> (f64, f64) {
        // returns (reject_traditional, reject_fair) indicators for one trial
        let mut xi = Vec::with_capacity(n);
        let mut psi = Vec::with_capacity(n);
        let s = (1.0 - rho * rho).sqrt();
        for _ in 0..n {
            let g1: f64 = StandardNormal.sample(rng);
            let g2: f64 = StandardNormal.sample(rng);
            xi.push(mu + g1);
            psi.push(rho * g1 + s * g2);
        }
        let out = fair_hypothesis_test(&xi, &psi, rho, a).expect("validated parameters");
        (
            out.reject_traditional as u8 as f64,
            out.reject_fair as u8 as f64,
        )
    };
    let mut sizes = (0.0, 0.0);
    let mut powers = (0.0, 0.0);
    for _ in 0..trials {
        let (t, f) = draw(0.0, &mut rng);
        sizes.0 += t;
        sizes.1 += f;
    }
    for _ in 0..trials {
        let (t, f) = draw(mu_alt, &mut rng);
        powers.0 += t;
        powers.1 += f;
    }
    let tf = trials as f64;
    Ok(PowerEstimate {
        size_traditional: sizes.0 / tf,
        size_fair: sizes.1 / tf,
        power_traditional: powers.0 / tf,
        power_fair: powers.1 / tf,
        trials,
    })
}
