//! Assembly of the full fairness constraint set for a level-(𝔤,𝔥) problem.
//!
//! A [`ConstraintSet`] holds one scalar constraint atom per multi-index σ:
//! `|B·c_σ| ≤ Δ_{m,1}` for q = 1 and `|B Q_σ Bᵀ| ≤ Δ_{m,2}` for q = 2.
//! Atoms whose coefficient tensor and threshold coincide are deduplicated
//! (one-hot protected encodings make many σ coincide). Levels with q ≥ 3 are
//! retained as evaluation-only entries; solvers reject them.
//!
//! In equalized-odds mode the same (m, q) constraints are replicated per
//! target class, each built from the class subsample, enforcing conditional
//! independence between the rule output and Z given the class.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ProtectedKind};
use crate::error::{Error, Result};
use crate::featmap::{DecisionRule, FeatureMapSpec};
use crate::moments::{
    self, linear_coef_tensor, quad_coef_family, DEFAULT_TENSOR_BUDGET,
};
use crate::schedule::{DeltaSchedule, ScheduleDims};

/// Two-sided linear constraints with thresholds at or below this value are
/// treated as exact equality constraints by the solvers.
pub const ZERO_DELTA: f64 = 1e-12;

/// Minimum subsample size for an equalized-odds conditioning class.
pub const MIN_CONDITION_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMode {
    DisparateImpact,
    EqualizedOdds,
}

/// One scalar q = 1 constraint: `|coef · B| ≤ delta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearAtom {
    pub m: usize,
    pub sigma: Vec<usize>,
    pub coef: DVector<f64>,
    pub delta: f64,
    /// Conditioned class value (equalized odds), None for disparate impact.
    pub condition: Option<f64>,
}

/// One scalar q = 2 constraint: `|B Q Bᵀ| ≤ delta` with Q symmetric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadAtom {
    pub m: usize,
    pub sigma: Vec<usize>,
    pub quad: DMatrix<f64>,
    pub delta: f64,
    pub condition: Option<f64>,
}

/// Level retained for evaluation only (q ≥ 3): residuals are computed through
/// the generic tensor evaluator, never by a solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalLevel {
    pub m: usize,
    pub q: usize,
    pub delta: f64,
    pub condition: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub level: (usize, usize),
    pub linear: Vec<LinearAtom>,
    pub quadratic: Vec<QuadAtom>,
    pub eval_only: Vec<EvalLevel>,
    pub mode: FairnessMode,
    /// Class values conditioned on (equalized odds), empty otherwise.
    pub conditioning: Vec<f64>,
}

impl ConstraintSet {
    /// Largest residual minus threshold over all solver-facing atoms for a
    /// d = 1 coefficient vector. Negative infinity when there are no atoms.
    pub fn max_violation(&self, beta: &DVector<f64>) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for a in &self.linear {
            worst = worst.max(a.coef.dot(beta).abs() - a.delta);
        }
        for a in &self.quadratic {
            worst = worst.max((&a.quad * beta).dot(beta).abs() - a.delta);
        }
        worst
    }

    pub fn is_feasible(&self, beta: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(beta) <= tol
    }

    pub fn atom_count(&self) -> usize {
        self.linear.len() + self.quadratic.len()
    }

    /// Residual minus threshold for the evaluation-only levels, computed with
    /// the generic tensor evaluator on the dataset the set was built from.
    pub fn eval_only_violation(&self, rule: &DecisionRule, ds: &Dataset) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for lvl in &self.eval_only {
            let sub;
            let data = match lvl.condition {
                Some(class) => {
                    let rows: Vec<usize> = (0..ds.n()).filter(|&i| ds.y[i] == class).collect();
                    sub = ds.select_rows(&rows);
                    &sub
                }
                None => ds,
            };
            let res =
                moments::constraint_residual_generic(rule, data, lvl.m, lvl.q, DEFAULT_TENSOR_BUDGET)?;
            worst = worst.max(res - lvl.delta);
        }
        Ok(worst)
    }
}

/// Directional moment estimate `max_dir E_n(⟨dir, row⟩^order)` used by the
/// finite-moment schedule. Exact for single columns; otherwise the unit
/// sphere is probed with the coordinate axes plus seeded random directions.
pub fn directional_moment(data: &DMatrix<f64>, order: usize, seed: u64) -> f64 {
    let (n, cols) = (data.nrows(), data.ncols());
    let nf = n as f64;
    let moment_along = |dir: &DVector<f64>| -> f64 {
        let mut sum = 0.0;
        for i in 0..n {
            let mut v = 0.0;
            for j in 0..cols {
                v += dir[j] * data[(i, j)];
            }
            sum += v.powi(order as i32);
        }
        sum / nf
    };
    if cols == 1 {
        let plus = moment_along(&DVector::from_element(1, 1.0));
        if order % 2 == 0 {
            return plus;
        }
        let minus = moment_along(&DVector::from_element(1, -1.0));
        return plus.max(minus);
    }
    let mut best = f64::NEG_INFINITY;
    for j in 0..cols {
        let mut e = DVector::zeros(cols);
        e[j] = 1.0;
        best = best.max(moment_along(&e));
        e[j] = -1.0;
        best = best.max(moment_along(&e));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..512 {
        let mut dir = DVector::zeros(cols);
        for j in 0..cols {
            dir[j] = StandardNormal.sample(&mut rng);
        }
        let norm = dir.norm();
        if norm > 0.0 {
            dir /= norm;
            best = best.max(moment_along(&dir));
        }
    }
    best
}

fn is_binary01(z: &DMatrix<f64>) -> bool {
    z.ncols() == 1 && z.iter().all(|&v| v == 0.0 || v == 1.0)
}

fn data_alpha(ds: &Dataset) -> f64 {
    let mut alpha = 1.0f64;
    for v in ds.x.iter().chain(ds.z.iter()) {
        alpha = alpha.max(v.abs());
    }
    alpha
}

fn push_linear_dedup(out: &mut Vec<LinearAtom>, atom: LinearAtom) {
    let dup = out.iter().any(|a| {
        a.delta == atom.delta && a.condition == atom.condition && a.coef == atom.coef
    });
    if !dup {
        out.push(atom);
    }
}

fn push_quad_dedup(out: &mut Vec<QuadAtom>, atom: QuadAtom) {
    let dup = out.iter().any(|a| {
        a.delta == atom.delta && a.condition == atom.condition && a.quad == atom.quad
    });
    if !dup {
        out.push(atom);
    }
}

/// Build the level-(𝔤,𝔥) constraint set for a dataset and feature map.
///
/// `binary_reduction` drops the m ≥ 2 levels when Z is a single {0,1} column,
/// where they are exactly redundant with m = 1. In equalized-odds mode the
/// constraints are replicated per target class over the class subsample;
/// classes with fewer than [`MIN_CONDITION_SAMPLES`] rows are an error.
pub fn build_constraint_set(
    ds: &Dataset,
    spec: &FeatureMapSpec,
    level: (usize, usize),
    schedule: &DeltaSchedule,
    mode: FairnessMode,
    binary_reduction: bool,
) -> Result<ConstraintSet> {
    let (g, h) = level;
    if g == 0 || h == 0 {
        return Err(Error::Parameter("levels must satisfy 𝔤, 𝔥 >= 1".into()));
    }
    let omega_full = spec.eval_dataset(ds)?;

    // Conditioning groups: the whole sample, or one subsample per target class.
    let mut groups: Vec<(Option<f64>, Vec<usize>)> = Vec::new();
    match mode {
        FairnessMode::DisparateImpact => groups.push((None, (0..ds.n()).collect())),
        FairnessMode::EqualizedOdds => {
            if ds.z_kind == ProtectedKind::Continuous {
                return Err(Error::Mode(
                    "equalized odds needs a binary or categorical protected attribute".into(),
                ));
            }
            let mut classes: Vec<f64> = Vec::new();
            for &v in ds.y.iter() {
                if !classes.contains(&v) {
                    classes.push(v);
                }
            }
            classes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if classes.len() < 2 || classes.len() > 10 {
                return Err(Error::Mode(format!(
                    "equalized odds conditions on a discrete target; found {} distinct values",
                    classes.len()
                )));
            }
            for class in classes {
                let rows: Vec<usize> = (0..ds.n()).filter(|&i| ds.y[i] == class).collect();
                if rows.len() < MIN_CONDITION_SAMPLES {
                    return Err(Error::Category(format!(
                        "conditioning class {class} has {} samples (min {MIN_CONDITION_SAMPLES})",
                        rows.len()
                    )));
                }
                groups.push((Some(class), rows));
            }
        }
    }

    let alpha = data_alpha(ds);
    let rho = spec.rho() as f64;
    let reduce = binary_reduction && is_binary01(&ds.z);
    let g_eff = if reduce { 1 } else { g };

    let mut linear = Vec::new();
    let mut quadratic = Vec::new();
    let mut eval_only = Vec::new();
    let mut conditioning = Vec::new();

    for (condition, rows) in &groups {
        if let Some(c) = condition {
            conditioning.push(*c);
        }
        let (omega, z);
        let (omega_ref, z_ref) = if condition.is_some() {
            omega = omega_full.select_rows(rows.as_slice());
            z = ds.z.select_rows(rows.as_slice());
            (&omega, &z)
        } else {
            (&omega_full, &ds.z)
        };
        let dims = ScheduleDims {
            n: rows.len(),
            p: spec.p(),
            d: 1,
            r: ds.r(),
            alpha,
            rho,
        };
        let z_for_est = z_ref.clone();
        let omega_for_est = omega_ref.clone();
        let finite_est = move |m: usize, q: usize| -> Result<(f64, f64)> {
            let m4m = directional_moment(&z_for_est, 4 * m, 0x5eed_0001);
            let m04q = directional_moment(&omega_for_est, 4 * q, 0x5eed_0002);
            if m4m <= 0.0 || m04q <= 0.0 {
                return Err(Error::Estimation(format!(
                    "empirical moment estimate nonpositive for (m={m}, q={q})"
                )));
            }
            Ok((m4m, m04q))
        };

        for m in 1..=g_eff {
            for q in 1..=h {
                let delta = schedule.delta(m, q, &dims, Some(&finite_est))?;
                match q {
                    1 => {
                        let tensor = linear_coef_tensor(omega_ref, z_ref, m, DEFAULT_TENSOR_BUDGET)?;
                        let mut si = 0usize;
                        let r = ds.r();
                        for coef in tensor.coefs.into_iter() {
                            let sigma = decode_multi_index(si, r, m);
                            si += 1;
                            push_linear_dedup(
                                &mut linear,
                                LinearAtom {
                                    m,
                                    sigma,
                                    coef,
                                    delta,
                                    condition: *condition,
                                },
                            );
                        }
                    }
                    2 => {
                        let fam = quad_coef_family(omega_ref, z_ref, m, DEFAULT_TENSOR_BUDGET)?;
                        let mut si = 0usize;
                        let r = ds.r();
                        for quad in fam.mats.into_iter() {
                            let sigma = decode_multi_index(si, r, m);
                            si += 1;
                            push_quad_dedup(
                                &mut quadratic,
                                QuadAtom {
                                    m,
                                    sigma,
                                    quad,
                                    delta,
                                    condition: *condition,
                                },
                            );
                        }
                    }
                    _ => {
                        eval_only.push(EvalLevel {
                            m,
                            q,
                            delta,
                            condition: *condition,
                        });
                    }
                }
            }
        }
    }

    Ok(ConstraintSet {
        level,
        linear,
        quadratic,
        eval_only,
        mode,
        conditioning,
    })
}

/// Decode a row-major flat index into the multi-index σ ∈ [r]^m.
fn decode_multi_index(mut flat: usize, r: usize, m: usize) -> Vec<usize> {
    let mut sigma = vec![0usize; m];
    for k in (0..m).rev() {
        sigma[k] = flat % r;
        flat /= r;
    }
    sigma
}
