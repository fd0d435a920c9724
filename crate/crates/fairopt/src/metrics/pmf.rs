//! Exact moment-equality independence oracle over finite discrete
//! distributions with rational support points and probabilities.
//!
//! Independence of (U, V) with a finite moment generating function is
//! equivalent to `E(U^m V^q) = E(U^m)·E(V^q)` for all m, q ≥ 1; on a finite
//! rational pmf each equality is decidable exactly, so the oracle checks all
//! levels up to (g, h) in exact arithmetic.

use num::rational::BigRational;
use num::traits::{One, Signed, ToPrimitive, Zero};
use serde::Deserialize;

use crate::error::{Error, Result};

/// One support atom: values (u, v) carrying probability p.
pub type Atom = (BigRational, BigRational, BigRational);

/// A finite joint pmf of a scalar pair (U, V) with exact probabilities.
#[derive(Debug, Clone)]
pub struct DiscretePmf {
    atoms: Vec<Atom>,
}

impl DiscretePmf {
    /// Probabilities must be nonnegative and sum to exactly 1.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Pmf("pmf has no support points".into()));
        }
        let mut total = BigRational::zero();
        for (_, _, p) in &atoms {
            if p.is_negative() {
                return Err(Error::Pmf(format!("negative probability {p}")));
            }
            total += p;
        }
        if !total.is_one() {
            return Err(Error::Pmf(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscretePmf { atoms })
    }

    /// The product pmf of two marginals: P(u, v) = P_U(u)·P_V(v).
    pub fn product(
        u_marginal: &[(BigRational, BigRational)],
        v_marginal: &[(BigRational, BigRational)],
    ) -> Result<Self> {
        let mut atoms = Vec::with_capacity(u_marginal.len() * v_marginal.len());
        for (u, pu) in u_marginal {
            for (v, pv) in v_marginal {
                atoms.push((u.clone(), v.clone(), pu * pv));
            }
        }
        DiscretePmf::new(atoms)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Exact mixed moment E(U^m V^q); m or q may be zero.
    pub fn moment(&self, m: usize, q: usize) -> BigRational {
        let mut sum = BigRational::zero();
        for (u, v, p) in &self.atoms {
            sum += p * u.pow(m as i32) * v.pow(q as i32);
        }
        sum
    }

    /// Exact residual E(U^m V^q) − E(U^m)·E(V^q).
    pub fn residual(&self, m: usize, q: usize) -> BigRational {
        self.moment(m, q) - self.moment(m, 0) * self.moment(0, q)
    }
}

/// Outcome of the exact moment-equality check up to level (g, h).
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub pass: bool,
    /// Levels at which the moment equality fails, in (m+q, m) order.
    pub failures: Vec<(usize, usize)>,
    /// Largest |residual| over all checked levels.
    pub worst_residual: BigRational,
    /// Level attaining the worst residual, when nonzero.
    pub worst_level: Option<(usize, usize)>,
}

impl OracleOutcome {
    pub fn worst_residual_f64(&self) -> f64 {
        self.worst_residual.to_f64().unwrap_or(f64::NAN)
    }
}

/// Check `E(U^m V^q) = E(U^m)·E(V^q)` exactly for all (m, q) ∈ [g]×[h].
pub fn independence_oracle(pmf: &DiscretePmf, g: usize, h: usize) -> Result<OracleOutcome> {
    if g == 0 || h == 0 {
        return Err(Error::Parameter("oracle levels must satisfy g, h >= 1".into()));
    }
    let mut failures = Vec::new();
    let mut worst = BigRational::zero();
    let mut worst_level = None;
    let mut levels: Vec<(usize, usize)> = (1..=g)
        .flat_map(|m| (1..=h).map(move |q| (m, q)))
        .collect();
    levels.sort_by_key(|&(m, q)| (m + q, m));
    for (m, q) in levels {
        let res = pmf.residual(m, q);
        if !res.is_zero() {
            failures.push((m, q));
            let mag = res.abs();
            if mag > worst {
                worst = mag;
                worst_level = Some((m, q));
            }
        }
    }
    Ok(OracleOutcome {
        pass: failures.is_empty(),
        failures,
        worst_residual: worst,
        worst_level,
    })
}

/// On-disk pmf description: rational strings like "1/3", "-2", "5/4".
#[derive(Debug, Deserialize)]
pub struct PmfFile {
    pub atoms: Vec<PmfFileAtom>,
}

#[derive(Debug, Deserialize)]
pub struct PmfFileAtom {
    pub u: String,
    pub v: String,
    pub p: String,
}

pub fn parse_rational(s: &str) -> Result<BigRational> {
    s.trim()
        .parse::<BigRational>()
        .map_err(|e| Error::Pmf(format!("cannot parse rational '{s}': {e}")))
}

impl PmfFile {
    pub fn into_pmf(self) -> Result<DiscretePmf> {
        let atoms = self
            .atoms
            .into_iter()
            .map(|a| {
                Ok((
                    parse_rational(&a.u)?,
                    parse_rational(&a.v)?,
                    parse_rational(&a.p)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        DiscretePmf::new(atoms)
    }
}
