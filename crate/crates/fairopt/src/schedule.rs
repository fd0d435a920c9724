//! Threshold schedules Δ_{m,q} and the concentration radii behind them.
//!
//! Four families are provided. The bounded-data radius scales like
//! √(log/n); its threshold is `3(1+log n)·R`. The sub-Gaussian radius decays
//! like n^{-1/6} with threshold `3C + C²`. The finite-moment radius decays
//! like n^{-1/2} with threshold `3Y + Y²` and plugs in empirical moment
//! estimates. The ε schedule `Δ_{m,q} = ε^{m+q}·m!·q!` is the single-knob
//! default used in experiments, optionally augmented with the bounded
//! concentration term.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Problem dimensions a schedule may consult when producing Δ_{m,q}.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleDims {
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub r: usize,
    /// Empirical data bound α ≥ 1.
    pub alpha: f64,
    /// Maximal monomial degree ρ ≥ 1 of the feature map.
    pub rho: f64,
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, v| acc * v as f64)
}

/// Concentration radius for bounded data:
/// `R_{m,q}[n] = 8 α^{m+ρq} p^{q/2} √((dp·log(1+4q) + m·log r + q·log d)/n)`.
/// The `log r` and `log d` terms vanish when r = 1 or d = 1.
pub fn radius_bounded(
    n: usize,
    m: usize,
    q: usize,
    alpha: f64,
    rho: f64,
    p: usize,
    d: usize,
    r: usize,
) -> f64 {
    let (nf, pf, df, rf) = (n as f64, p as f64, d as f64, r as f64);
    let (mf, qf) = (m as f64, q as f64);
    let inner = (df * pf * (1.0 + 4.0 * qf).ln() + mf * rf.ln() + qf * df.ln()) / nf;
    8.0 * alpha.powf(mf + rho * qf) * pf.powf(qf / 2.0) * inner.sqrt()
}

/// Bounded-data threshold `Δ_{m,q} = 3(1+log n)·R_{m,q}[n]`.
pub fn delta_bounded(
    n: usize,
    m: usize,
    q: usize,
    alpha: f64,
    rho: f64,
    p: usize,
    d: usize,
    r: usize,
) -> f64 {
    3.0 * (1.0 + (n as f64).ln()) * radius_bounded(n, m, q, alpha, rho, p, d, r)
}

/// Sub-Gaussian radius
/// `C_{m,q}[n] = [e²M²·2⁷·5³/(πn) · (1+4q)^{dp} (rm³)^m (dq³)^q (24σ²/e)^{3m+3q}]^{1/6}`.
pub fn radius_subgaussian(
    n: usize,
    m: usize,
    q: usize,
    m_const: f64,
    sigma2: f64,
    d: usize,
    p: usize,
    r: usize,
) -> f64 {
    let (nf, pf, df, rf) = (n as f64, p as f64, d as f64, r as f64);
    let (mf, qf) = (m as f64, q as f64);
    let e = std::f64::consts::E;
    let lead = e * e * m_const * m_const * 128.0 * 125.0 / (std::f64::consts::PI * nf);
    let combinatorial = (1.0 + 4.0 * qf).powf(df * pf)
        * (rf * mf.powi(3)).powf(mf)
        * (df * qf.powi(3)).powf(qf);
    let moment = (24.0 * sigma2 / e).powf(3.0 * mf + 3.0 * qf);
    (lead * combinatorial * moment).powf(1.0 / 6.0)
}

/// Sub-Gaussian threshold `Δ_{m,q} = 3·C_{m,q}[n] + C_{m,q}[n]²`.
pub fn delta_subgaussian(
    n: usize,
    m: usize,
    q: usize,
    m_const: f64,
    sigma2: f64,
    d: usize,
    p: usize,
    r: usize,
) -> f64 {
    let c = radius_subgaussian(n, m, q, m_const, sigma2, d, p, r);
    3.0 * c + c * c
}

/// Finite-moment radius `Y_{m,q}[n] = (8/n)^{1/2} (M_{4m,0}·M_{0,4q})^{1/4}`,
/// with `M_{4m,0}` and `M_{0,4q}` supplied as (plug-in) moment estimates.
pub fn radius_finite_moment(n: usize, m4m: f64, m04q: f64) -> Result<f64> {
    if !(m4m > 0.0) || !(m04q > 0.0) {
        return Err(Error::Estimation(format!(
            "finite-moment schedule needs positive moment estimates, got {m4m} and {m04q}"
        )));
    }
    Ok((8.0 / n as f64).sqrt() * (m4m * m04q).powf(0.25))
}

/// Finite-moment threshold `Δ = 3Y + Y²`.
pub fn delta_finite_moment(n: usize, m4m: f64, m04q: f64) -> Result<f64> {
    let y = radius_finite_moment(n, m4m, m04q)?;
    Ok(3.0 * y + y * y)
}

/// The ε schedule `Δ_{m,q} = ε^{m+q}·m!·q!`, optionally adding the bounded
/// concentration term `3(1+log n)·R_{m,q}[n]`.
pub fn delta_epsilon(
    eps: f64,
    m: usize,
    q: usize,
    concentration: Option<(usize, f64, f64, usize, usize, usize)>, // (n, alpha, rho, p, d, r)
) -> f64 {
    let base = eps.powi((m + q) as i32) * factorial(m) * factorial(q);
    match concentration {
        Some((n, alpha, rho, p, d, r)) => base + delta_bounded(n, m, q, alpha, rho, p, d, r),
        None => base,
    }
}

/// Schedule selection, serializable from experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaSchedule {
    /// `3(1+log n)·R_{m,q}[n]` with α estimated from the data and ρ from the
    /// feature map.
    Bounded,
    /// `3C + C²` with user-supplied sub-Gaussian parameters (M, σ²).
    Subgaussian { m_const: f64, sigma2: f64 },
    /// `3Y + Y²` with 4m-th / 4q-th moments estimated from the data.
    Finite,
    /// `ε^{m+q}·m!·q!`.
    Eps { eps: f64 },
    /// `ε^{m+q}·m!·q! + 3(1+log n)·R_{m,q}[n]`.
    EpsConc { eps: f64 },
    /// Explicit Δ table keyed by (m, q).
    Manual { table: BTreeMap<String, f64> },
}

impl DeltaSchedule {
    /// Moment estimates needed by the finite schedule: caller supplies a
    /// function giving the empirical directional moments (M_{4m,0}, M_{0,4q}).
    pub fn delta(
        &self,
        m: usize,
        q: usize,
        dims: &ScheduleDims,
        finite_moments: Option<&dyn Fn(usize, usize) -> Result<(f64, f64)>>,
    ) -> Result<f64> {
        let v = match self {
            DeltaSchedule::Bounded => {
                delta_bounded(dims.n, m, q, dims.alpha, dims.rho, dims.p, dims.d, dims.r)
            }
            DeltaSchedule::Subgaussian { m_const, sigma2 } => {
                if *m_const < 1.0 || *sigma2 < 0.0 {
                    return Err(Error::Config(
                        "subgaussian schedule needs M >= 1 and sigma2 >= 0".into(),
                    ));
                }
                delta_subgaussian(dims.n, m, q, *m_const, *sigma2, dims.d, dims.p, dims.r)
            }
            DeltaSchedule::Finite => {
                let est = finite_moments.ok_or_else(|| {
                    Error::Config("finite schedule requires data-driven moment estimates".into())
                })?;
                let (m4m, m04q) = est(m, q)?;
                delta_finite_moment(dims.n, m4m, m04q)?
            }
            DeltaSchedule::Eps { eps } => {
                if *eps < 0.0 {
                    return Err(Error::Config("eps schedule needs eps >= 0".into()));
                }
                delta_epsilon(*eps, m, q, None)
            }
            DeltaSchedule::EpsConc { eps } => {
                if *eps < 0.0 {
                    return Err(Error::Config("eps_conc schedule needs eps >= 0".into()));
                }
                delta_epsilon(
                    *eps,
                    m,
                    q,
                    Some((dims.n, dims.alpha, dims.rho, dims.p, dims.d, dims.r)),
                )
            }
            DeltaSchedule::Manual { table } => *table
                .get(&format!("{m},{q}"))
                .ok_or_else(|| Error::Config(format!("manual Δ table has no entry for ({m},{q})")))?,
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Numeric(format!(
                "schedule produced invalid Δ_{{{m},{q}}} = {v}"
            )));
        }
        Ok(v)
    }
}
