//! Solvers for the level-(𝔤,𝔥) problem with scalar (d = 1) decision rules.
//!
//! The 𝔥 = 1 case is a single convex program: the fairness constraints are
//! two-sided linear inequalities. The 𝔥 = 2 case adds two-sided quadratic
//! constraints `−Δ ≤ B Q Bᵀ ≤ Δ` whose matrices are indefinite; each is a
//! difference of convex quadratics via [`dc_split`], handled by a constrained
//! convex-concave procedure: at iterate Bₖ the concave part of each side is
//! linearized, giving a convex subproblem whose solutions remain feasible for
//! the original constraints. B₀ = 0 is feasible for every threshold Δ ≥ 0
//! because the constraints are homogeneous.

mod subproblem;

pub use subproblem::{solve_convex_subproblem, ConvexQuadIneq, SubStatus};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintSet, ZERO_DELTA};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::featmap::{DecisionRule, FeatureMapSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Hinge,
    Squared,
    Pinball { over: f64, under: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
}

impl LossSpec {
    pub fn hinge() -> Self {
        LossSpec { kind: LossKind::Hinge }
    }

    pub fn squared() -> Self {
        LossSpec { kind: LossKind::Squared }
    }

    pub fn pinball(over: f64, under: f64) -> Result<Self> {
        if over < 0.0 || under < 0.0 || (over == 0.0 && under == 0.0) {
            return Err(Error::Parameter(format!(
                "pinball weights must be nonnegative and not both zero, got ({over}, {under})"
            )));
        }
        Ok(LossSpec {
            kind: LossKind::Pinball { over, under },
        })
    }

    /// Hinge loss requires ±1 class labels.
    pub fn validate_targets(&self, y: &DVector<f64>) -> Result<()> {
        if matches!(self.kind, LossKind::Hinge) && y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::Parameter(
                "hinge loss requires targets in {-1, +1}".into(),
            ));
        }
        Ok(())
    }

    /// Empirical risk of the scores Ωβ against y.
    pub fn eval(&self, omega: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
        let n = omega.nrows();
        let mut total = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..omega.ncols() {
                s += omega[(i, j)] * beta[j];
            }
            total += match self.kind {
                LossKind::Squared => {
                    let e = y[i] - s;
                    e * e
                }
                LossKind::Hinge => (1.0 - y[i] * s).max(0.0),
                LossKind::Pinball { over, under } => {
                    let u = s - y[i];
                    (over * u).max(under * (-u)).max(0.0)
                }
            };
        }
        total / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOpts {
    /// Feasibility tolerance on constraint residuals of the returned rule.
    pub feas_tol: f64,
    /// Relative objective tolerance against reference solutions.
    pub obj_tol: f64,
    /// Outer CCP stopping tolerance on ‖Bₖ₊₁ − Bₖ‖₂.
    pub ccp_step_tol: f64,
    /// Outer CCP iteration cap.
    pub ccp_max_iter: usize,
    /// Interior-point tolerance for each convex subproblem.
    pub ip_tol: f64,
    /// Interior-point iteration cap.
    pub ip_max_iter: usize,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            feas_tol: 1e-8,
            obj_tol: 1e-6,
            ccp_step_tol: 1e-6,
            ccp_max_iter: 100,
            ip_tol: 1e-10,
            ip_max_iter: 400,
        }
    }
}

/// A fully specified training problem.
#[derive(Debug, Clone)]
pub struct FOProblem {
    pub ds: Dataset,
    pub spec: FeatureMapSpec,
    pub loss: LossSpec,
    pub constraints: ConstraintSet,
    pub lambda: f64,
    pub opts: SolverOpts,
}

impl FOProblem {
    pub fn new(
        ds: Dataset,
        spec: FeatureMapSpec,
        loss: LossSpec,
        constraints: ConstraintSet,
        lambda: f64,
    ) -> Result<Self> {
        if lambda < 1.0 {
            return Err(Error::Parameter(format!("lambda must be >= 1, got {lambda}")));
        }
        loss.validate_targets(&ds.y)?;
        let p = spec.p();
        if constraints.linear.iter().any(|a| a.coef.len() != p)
            || constraints.quadratic.iter().any(|a| a.quad.nrows() != p)
        {
            return Err(Error::Shape(
                "constraint set was built for a different feature map dimension".into(),
            ));
        }
        Ok(FOProblem {
            ds,
            spec,
            loss,
            constraints,
            lambda,
            opts: SolverOpts::default(),
        })
    }

    pub fn with_opts(mut self, opts: SolverOpts) -> Self {
        self.opts = opts;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    InfeasibleSubproblem,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FOSolution {
    pub rule: DecisionRule,
    /// Final empirical risk.
    pub objective: f64,
    /// Max over fairness constraints of residual − Δ (−∞ with no constraints).
    pub max_violation: f64,
    /// Outer iterations (1 for the convex path).
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Split a symmetric matrix into a difference of PSD matrices `Q = Q₊ − Q₋`
/// via eigendecomposition, separating positive from negative eigenvalues.
pub fn dc_split(q: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = q.nrows();
    if q.ncols() != p {
        return Err(Error::Shape("dc_split needs a square matrix".into()));
    }
    let mut asym = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            asym = asym.max((q[(i, j)] - q[(j, i)]).abs());
        }
    }
    if asym > 1e-10 {
        return Err(Error::Numeric(format!(
            "dc_split input asymmetric by {asym:.3e} (limit 1e-10)"
        )));
    }
    let sym = (q + q.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut plus = DMatrix::zeros(p, p);
    let mut minus = DMatrix::zeros(p, p);
    for k in 0..p {
        let lam = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        let outer = &v * v.transpose();
        if lam > 0.0 {
            plus += outer * lam;
        } else if lam < 0.0 {
            minus += outer * (-lam);
        }
    }
    Ok((plus, minus))
}

/// Rows `√λᵢ vᵢᵀ` of a PSD matrix for eigenvalues above `tol`, so that
/// `FᵀF` reproduces the matrix.
fn psd_factor(mat: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let p = mat.nrows();
    let eig = mat.clone().symmetric_eigen();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for k in 0..p {
        let lam = eig.eigenvalues[k];
        if lam > tol {
            rows.push(eig.eigenvectors.column(k).clone_owned() * lam.sqrt());
        }
    }
    let mut f = DMatrix::zeros(rows.len(), p);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..p {
            f[(i, j)] = row[j];
        }
    }
    f
}

struct PreparedConstraints {
    two_sided: Vec<(DVector<f64>, f64)>,
    equalities: Vec<DVector<f64>>,
    /// (Q₊, Q₋, factor₊, factor₋, Δ) per active quadratic constraint.
    ccp_quads: Vec<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64)>,
}

fn sym_lambda_max(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &v| a.max(v))
}

/// Constraints that cannot bind anywhere inside the norm ball are dropped
/// before reaching the conic solver: `|aᵀβ| ≤ ‖a‖√λ` and
/// `|βQβᵀ| ≤ λ·max(λmax(Q₊), λmax(Q₋))` are exact bounds over ‖β‖ ≤ √λ.
fn prepare(constraints: &ConstraintSet, lambda: f64) -> Result<PreparedConstraints> {
    let mut two_sided = Vec::new();
    let mut equalities = Vec::new();
    let mut ccp_quads = Vec::new();
    for atom in &constraints.linear {
        if atom.delta <= ZERO_DELTA {
            equalities.push(atom.coef.clone());
        } else if atom.delta < atom.coef.norm() * lambda.sqrt() {
            two_sided.push((atom.coef.clone(), atom.delta));
        }
    }
    for atom in &constraints.quadratic {
        let (plus, minus) = dc_split(&atom.quad)?;
        let scale = atom.quad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tol = (scale * 1e-12).max(1e-300);
        let fp = psd_factor(&plus, tol);
        let fm = psd_factor(&minus, tol);
        if fp.nrows() == 0 && fm.nrows() == 0 {
            continue; // numerically zero matrix: constraint is vacuous
        }
        if atom.delta <= ZERO_DELTA {
            // −0 ≤ BQBᵀ ≤ 0 from B₀ = 0 pins B to the null space of both parts
            for i in 0..fp.nrows() {
                equalities.push(fp.row(i).transpose());
            }
            for i in 0..fm.nrows() {
                equalities.push(fm.row(i).transpose());
            }
        } else if atom.delta < lambda * sym_lambda_max(&plus).max(sym_lambda_max(&minus)) {
            ccp_quads.push((plus, minus, fp, fm, atom.delta));
        }
    }
    Ok(PreparedConstraints {
        two_sided,
        equalities,
        ccp_quads,
    })
}

/// One recorded outer iteration of the convex-concave procedure.
#[derive(Debug, Clone)]
pub struct CcpIterate {
    pub beta: DVector<f64>,
    pub objective: f64,
}

/// Solve via the constrained convex-concave procedure (𝔥 = 2 path). Also
/// correct when no quadratic constraints are active, where it reduces to the
/// single convex solve.
pub fn ccp_solve(problem: &FOProblem) -> Result<FOSolution> {
    Ok(ccp_solve_traced(problem)?.0)
}

/// As [`ccp_solve`], additionally returning every outer iterate for
/// monotone-descent and iterate-feasibility checks.
pub fn ccp_solve_traced(problem: &FOProblem) -> Result<(FOSolution, Vec<CcpIterate>)> {
    let omega = problem.spec.eval_dataset(&problem.ds)?;
    let prep = prepare(&problem.constraints, problem.lambda)?;
    let opts = &problem.opts;
    let p = problem.spec.p();

    let mut beta: DVector<f64> = DVector::zeros(p);
    let mut trace: Vec<CcpIterate> = Vec::new();
    let mut iterations = 0usize;
    let mut converged = prep.ccp_quads.is_empty();
    let mut last_status;

    loop {
        let quads: Vec<ConvexQuadIneq> = prep
            .ccp_quads
            .iter()
            .flat_map(|(qp, qm, fp, fm, delta)| {
                // upper side: βQ₊βᵀ − 2βₖQ₋βᵀ + βₖQ₋βₖᵀ ≤ Δ
                let lin_u = -2.0 * (qm * &beta);
                let rhs_u = delta - (qm * &beta).dot(&beta);
                // lower side: βQ₋βᵀ − 2βₖQ₊βᵀ + βₖQ₊βₖᵀ ≤ Δ
                let lin_l = -2.0 * (qp * &beta);
                let rhs_l = delta - (qp * &beta).dot(&beta);
                [
                    ConvexQuadIneq {
                        factor: fp.clone(),
                        lin: lin_u,
                        rhs: rhs_u,
                    },
                    ConvexQuadIneq {
                        factor: fm.clone(),
                        lin: lin_l,
                        rhs: rhs_l,
                    },
                ]
            })
            .collect();

        let sol = solve_convex_subproblem(
            &omega,
            &problem.ds.y,
            &problem.loss,
            &prep.two_sided,
            &[],
            &quads,
            &prep.equalities,
            problem.lambda,
            opts,
        )?;
        iterations += 1;
        last_status = sol.status;
        let step = (&sol.beta - &beta).norm();
        beta = sol.beta;
        trace.push(CcpIterate {
            beta: beta.clone(),
            objective: sol.objective,
        });
        if prep.ccp_quads.is_empty() || step <= opts.ccp_step_tol {
            converged = true;
            break;
        }
        if iterations >= opts.ccp_max_iter {
            break;
        }
    }

    let objective = problem.loss.eval(&omega, &problem.ds.y, &beta);
    let max_violation = problem.constraints.max_violation(&beta);
    let norm_ok = beta.norm() <= problem.lambda.sqrt() * (1.0 + 1e-6) + opts.feas_tol;
    let status = if converged
        && last_status == SubStatus::Optimal
        && max_violation <= opts.feas_tol
        && norm_ok
    {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIter
    };
    let b = DMatrix::from_row_slice(1, p, beta.as_slice());
    let solution = FOSolution {
        rule: DecisionRule::new(b, problem.spec.clone())?,
        objective,
        max_violation,
        iterations,
        status,
    };
    Ok((solution, trace))
}

/// Solve the fair optimization problem, dispatching on the hierarchy level:
/// a single convex program for 𝔥 = 1, the convex-concave procedure for 𝔥 = 2.
pub fn solve_fo(problem: &FOProblem) -> Result<FOSolution> {
    if !problem.constraints.eval_only.is_empty() || problem.constraints.level.1 > 2 {
        return Err(Error::Unsupported(format!(
            "solving supports 𝔥 ∈ {{1, 2}}; level ({}, {}) sets are evaluation-only",
            problem.constraints.level.0, problem.constraints.level.1
        )));
    }
    ccp_solve(problem)
}
