//! Conic assembly of one convex subproblem and the interior-point call.
//!
//! Variables are the rule coefficients β ∈ R^p, plus one epigraph slack per
//! sample for the hinge and pinball losses. Everything is cast into the
//! standard conic form `min ½xᵀPx + qᵀx s.t. b − Ax ∈ K` with zero, nonneg
//! and second-order cones:
//!
//! * two-sided fairness constraints `|aᵀβ| ≤ Δ` become two nonneg rows, or a
//!   single zero-cone (equality) row when Δ is numerically zero;
//! * the norm ball `‖β‖₂ ≤ √λ` is one second-order cone;
//! * each convex-quadratic constraint `‖Fβ‖² + gᵀβ ≤ c` is rewritten as the
//!   second-order cone `‖(2Fβ, 1−u)‖₂ ≤ 1+u` with `u = c − gᵀβ`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT,
    SolverStatus, SupportedConeT, ZeroConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::constraints::ZERO_DELTA;
use crate::error::{Error, Result};

use super::{LossKind, LossSpec, SolverOpts};

/// A convex quadratic inequality `‖factor·β‖² + lin·β ≤ rhs`.
#[derive(Debug, Clone)]
pub struct ConvexQuadIneq {
    /// k × p factor F (possibly k = 0, leaving an affine constraint).
    pub factor: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubStatus {
    Optimal,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct SubSolution {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub status: SubStatus,
}

/// Sparse triplet collector for the constraint matrix.
struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    nrows: usize,
}

impl Triplets {
    fn new() -> Self {
        Triplets {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            nrows: 0,
        }
    }

    fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }

    fn new_row(&mut self) -> usize {
        let r = self.nrows;
        self.nrows += 1;
        r
    }

    fn into_csc(self, ncols: usize) -> CscMatrix<f64> {
        let mut order: Vec<usize> = (0..self.vals.len()).collect();
        order.sort_by_key(|&k| (self.cols[k], self.rows[k]));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(order.len());
        let mut nzval = Vec::with_capacity(order.len());
        for &k in &order {
            colptr[self.cols[k] + 1] += 1;
            rowval.push(self.rows[k]);
            nzval.push(self.vals[k]);
        }
        for c in 0..ncols {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix::new(self.nrows, ncols, colptr, rowval, nzval)
    }
}

/// Solve one convex subproblem.
///
/// `two_sided` entries are `|aᵀβ| ≤ Δ` (an equality when Δ ≤ 1e-12),
/// `one_sided` entries are `aᵀβ ≤ b`, `equalities` are `aᵀβ = 0` rows, and
/// `quads` are convex quadratic inequalities. The Euclidean norm ball
/// `‖β‖ ≤ √lambda` is always enforced.
#[allow(clippy::too_many_arguments)]
pub fn solve_convex_subproblem(
    omega: &DMatrix<f64>,
    y: &DVector<f64>,
    loss: &LossSpec,
    two_sided: &[(DVector<f64>, f64)],
    one_sided: &[(DVector<f64>, f64)],
    quads: &[ConvexQuadIneq],
    equalities: &[DVector<f64>],
    lambda: f64,
    opts: &SolverOpts,
) -> Result<SubSolution> {
    let n = omega.nrows();
    let p = omega.ncols();
    if y.len() != n {
        return Err(Error::Shape(format!(
            "target has {} entries, omega has {n} rows",
            y.len()
        )));
    }
    if lambda < 1.0 {
        return Err(Error::Parameter(format!("lambda must be >= 1, got {lambda}")));
    }
    let slack = match loss.kind {
        LossKind::Squared => 0,
        LossKind::Hinge | LossKind::Pinball { .. } => n,
    };
    let nvars = p + slack;

    // Objective.
    let mut pmat = Triplets::new();
    pmat.nrows = nvars;
    let mut qvec = vec![0.0f64; nvars];
    match loss.kind {
        LossKind::Squared => {
            // (1/n)‖y − Ωβ‖²  →  P = (2/n)ΩᵀΩ (upper triangle), q = −(2/n)Ωᵀy
            let scale = 2.0 / n as f64;
            let gram = omega.transpose() * omega;
            for c in 0..p {
                for r in 0..=c {
                    pmat.push(r, c, scale * gram[(r, c)]);
                }
            }
            let oty = omega.transpose() * y;
            for j in 0..p {
                qvec[j] = -scale * oty[j];
            }
        }
        LossKind::Hinge | LossKind::Pinball { .. } => {
            let w = 1.0 / n as f64;
            for i in 0..n {
                qvec[p + i] = w;
            }
        }
    }

    // Constraints, grouped by cone in row order.
    let mut a = Triplets::new();
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    // 1. zero cone: aᵀβ = 0
    let mut n_eq = 0usize;
    let push_eq = |a: &mut Triplets, b: &mut Vec<f64>, coef: &DVector<f64>| {
        let row = a.new_row();
        for j in 0..p {
            a.push(row, j, coef[j]);
        }
        b.push(0.0);
    };
    for coef in equalities {
        push_eq(&mut a, &mut b, coef);
        n_eq += 1;
    }
    for (coef, delta) in two_sided {
        if *delta <= ZERO_DELTA {
            push_eq(&mut a, &mut b, coef);
            n_eq += 1;
        }
    }
    if n_eq > 0 {
        cones.push(ZeroConeT(n_eq));
    }

    // 2. nonnegative cone
    let mut n_ineq = 0usize;
    for (coef, delta) in two_sided {
        if *delta > ZERO_DELTA {
            let row = a.new_row();
            for j in 0..p {
                a.push(row, j, coef[j]);
            }
            b.push(*delta);
            let row = a.new_row();
            for j in 0..p {
                a.push(row, j, -coef[j]);
            }
            b.push(*delta);
            n_ineq += 2;
        }
    }
    for (coef, bound) in one_sided {
        let row = a.new_row();
        for j in 0..p {
            a.push(row, j, coef[j]);
        }
        b.push(*bound);
        n_ineq += 1;
    }
    match loss.kind {
        LossKind::Squared => {}
        LossKind::Hinge => {
            for i in 0..n {
                // s_i >= 0
                let row = a.new_row();
                a.push(row, p + i, -1.0);
                b.push(0.0);
                // s_i >= 1 − y_i ω_iᵀ β
                let row = a.new_row();
                for j in 0..p {
                    a.push(row, j, -y[i] * omega[(i, j)]);
                }
                a.push(row, p + i, -1.0);
                b.push(-1.0);
                n_ineq += 2;
            }
        }
        LossKind::Pinball { over, under } => {
            for i in 0..n {
                // s_i >= over (ω_iᵀβ − y_i)
                let row = a.new_row();
                for j in 0..p {
                    a.push(row, j, over * omega[(i, j)]);
                }
                a.push(row, p + i, -1.0);
                b.push(over * y[i]);
                // s_i >= under (y_i − ω_iᵀβ)
                let row = a.new_row();
                for j in 0..p {
                    a.push(row, j, -under * omega[(i, j)]);
                }
                a.push(row, p + i, -1.0);
                b.push(-under * y[i]);
                n_ineq += 2;
            }
        }
    }
    if n_ineq > 0 {
        cones.push(NonnegativeConeT(n_ineq));
    }

    // 3. norm ball ‖β‖ ≤ √λ
    {
        let row = a.new_row();
        let _ = row;
        b.push(lambda.sqrt());
        for j in 0..p {
            let row = a.new_row();
            a.push(row, j, -1.0);
            b.push(0.0);
        }
        cones.push(SecondOrderConeT(p + 1));
    }

    // 4. quadratic constraints as rotated second-order cones
    for quad in quads {
        let k = quad.factor.nrows();
        // s0 = 1 + rhs − linᵀβ
        let row = a.new_row();
        for j in 0..p {
            a.push(row, j, quad.lin[j]);
        }
        b.push(1.0 + quad.rhs);
        // s_1..k = 2 F β
        for fr in 0..k {
            let row = a.new_row();
            for j in 0..p {
                a.push(row, j, -2.0 * quad.factor[(fr, j)]);
            }
            b.push(0.0);
        }
        // s_last = 1 − rhs + linᵀβ
        let row = a.new_row();
        for j in 0..p {
            a.push(row, j, -quad.lin[j]);
        }
        b.push(1.0 - quad.rhs);
        cones.push(SecondOrderConeT(k + 2));
    }

    let pmat = pmat.into_csc(nvars);
    let amat = a.into_csc(nvars);

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(opts.ip_max_iter as u32)
        .tol_gap_abs(opts.ip_tol)
        .tol_gap_rel(opts.ip_tol)
        .tol_feas(opts.ip_tol)
        .build()
        .map_err(|e| Error::Solver(format!("bad interior-point settings: {e}")))?;
    let mut solver = DefaultSolver::new(&pmat, &qvec, &amat, &b, &cones, settings)
        .map_err(|e| Error::Solver(format!("subproblem assembly rejected: {e:?}")))?;
    solver.solve();

    let status = match solver.solution.status {
        SolverStatus::Solved => SubStatus::Optimal,
        SolverStatus::AlmostSolved | SolverStatus::MaxIterations | SolverStatus::MaxTime => {
            SubStatus::MaxIter
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(Error::Solver(
                "convex subproblem reported primal infeasibility; fairness constraints with Δ ≥ 0 \
                 admit B = 0, so this indicates an internal inconsistency"
                    .into(),
            ));
        }
        other => {
            return Err(Error::Solver(format!(
                "interior-point solver failed with status {other:?}"
            )));
        }
    };

    let beta = DVector::from_iterator(p, solver.solution.x.iter().take(p).copied());
    let objective = loss.eval(omega, y, &beta);
    Ok(SubSolution {
        beta,
        objective,
        status,
    })
}
