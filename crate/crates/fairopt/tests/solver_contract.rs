//! Solver contract tests against independent oracles: normal equations,
//! 1-D breakpoint enumeration, closed-form constrained optima, and the
//! generic tensor evaluator for feasibility.

mod common;

use common::*;
use fairopt::constraints::{build_constraint_set, ConstraintSet, FairnessMode, QuadAtom};
use fairopt::data::Dataset;
use fairopt::featmap::FeatureMapSpec;
use fairopt::moments::{constraint_residual_generic, DEFAULT_TENSOR_BUDGET};
use fairopt::schedule::{DeltaSchedule, ScheduleDims};
use fairopt::solver::{ccp_solve_traced, solve_fo, FOProblem, LossSpec, SolveStatus};
use nalgebra::{DMatrix, DVector};

fn empty_constraints(level: (usize, usize)) -> ConstraintSet {
    ConstraintSet {
        level,
        linear: vec![],
        quadratic: vec![],
        eval_only: vec![],
        mode: FairnessMode::DisparateImpact,
        conditioning: vec![],
    }
}

#[test]
fn unconstrained_squared_matches_normal_equations() {
    let ds = correlated_regression(60, 4, 0.5, &[1.0, -0.7, 0.4, 2.0], 0.3, 101);
    let spec = FeatureMapSpec::affine_x(ds.p_x(), ds.r());
    let omega = spec.eval_dataset(&ds).unwrap();
    let oracle = ols_objective(&omega, &ds.y);

    let problem = FOProblem::new(
        ds.clone(),
        spec,
        LossSpec::squared(),
        empty_constraints((1, 1)),
        1e8,
    )
    .unwrap();
    let sol = solve_fo(&problem).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert_eq!(sol.iterations, 1);
    assert!(
        (sol.objective - oracle).abs() <= 1e-6 * oracle.max(1e-12),
        "solver {} vs oracle {}",
        sol.objective,
        oracle
    );
}

#[test]
fn huge_epsilon_reproduces_unconstrained_baseline() {
    let ds = correlated_regression(50, 3, 0.3, &[1.5, -0.5, 0.8], 0.2, 102);
    let spec = FeatureMapSpec::affine_x(ds.p_x(), ds.r());
    let omega = spec.eval_dataset(&ds).unwrap();
    let oracle = ols_objective(&omega, &ds.y);
    let sched = DeltaSchedule::Eps { eps: 1e6 };
    let constraints = build_constraint_set(
        &ds,
        &spec,
        (2, 2),
        &sched,
        FairnessMode::DisparateImpact,
        true,
    )
    .unwrap();
    let problem = FOProblem::new(ds, spec, LossSpec::squared(), constraints, 1e8).unwrap();
    let sol = solve_fo(&problem).unwrap();
    assert!((sol.objective - oracle).abs() <= 1e-6 * oracle.max(1e-12));
}

#[test]
fn norm_ball_projects_to_radius_one() {
    // intercept-only fit of y ≡ 3 with λ = 1: optimum has norm exactly 1
    let x = DMatrix::from_element(6, 1, 1.0);
    let y = DVector::from_element(6, 3.0);
    let z = DMatrix::from_fn(6, 1, |i, _| (i % 2) as f64);
    let ds = Dataset::from_parts(x, y, z).unwrap();
    let spec = FeatureMapSpec::linear_x(1, 1);
    let problem = FOProblem::new(ds, spec, LossSpec::squared(), empty_constraints((1, 1)), 1.0)
        .unwrap();
    let sol = solve_fo(&problem).unwrap();
    let norm = sol.rule.coef_norm();
    assert!((norm - 1.0).abs() <= 1e-6, "norm = {norm}");
    assert!((sol.rule.b[(0, 0)] - 1.0).abs() <= 1e-6);
}

#[test]
fn zero_delta_on_dependent_data_forces_zero_rule() {
    // the degenerate-set example: Z = X Bernoulli, Δ = 0, dependent sample
    let vals = [1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0];
    let x = DMatrix::from_column_slice(8, 1, &vals);
    let y = DVector::from_column_slice(&vals);
    let z = x.clone();
    let ds = Dataset::from_parts(x, y, z).unwrap();
    let p_hat = vals.iter().sum::<f64>() / vals.len() as f64;
    let spec = FeatureMapSpec::linear_x(1, 1);
    let sched = DeltaSchedule::Eps { eps: 0.0 };
    let constraints =
        build_constraint_set(&ds, &spec, (1, 1), &sched, FairnessMode::DisparateImpact, true)
            .unwrap();
    // the single coefficient is E(zx) − E(z)E(x) = p̂(1−p̂) ≠ 0
    assert!((constraints.linear[0].coef[0] - p_hat * (1.0 - p_hat)).abs() < 1e-12);
    let problem = FOProblem::new(ds, spec, LossSpec::squared(), constraints, 10.0).unwrap();
    let sol = solve_fo(&problem).unwrap();
    assert!(sol.rule.b[(0, 0)].abs() <= 1e-7, "B = {}", sol.rule.b[(0, 0)]);
    assert!((sol.objective - p_hat).abs() <= 1e-6);
}

#[test]
fn ccp_one_dimensional_closed_form() {
    // minimize (B−1)² s.t. −Δ ≤ B² ≤ Δ with Δ = 0.25: optimum at B = 0.5
    let x = DMatrix::from_element(4, 1, 1.0);
    let y = DVector::from_element(4, 1.0);
    let z = DMatrix::from_fn(4, 1, |i, _| (i % 2) as f64);
    let ds = Dataset::from_parts(x, y, z).unwrap();
    let spec = FeatureMapSpec::linear_x(1, 1);
    let mut constraints = empty_constraints((1, 2));
    constraints.quadratic.push(QuadAtom {
        m: 1,
        sigma: vec![0],
        quad: DMatrix::from_element(1, 1, 1.0),
        delta: 0.25,
        condition: None,
    });
    let problem = FOProblem::new(ds, spec, LossSpec::squared(), constraints, 10.0).unwrap();
    let (sol, trace) = ccp_solve_traced(&problem).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!(
        (sol.rule.b[(0, 0)] - 0.5).abs() <= 1e-5,
        "B = {}",
        sol.rule.b[(0, 0)]
    );
    // monotone descent and iterate feasibility along the trace
    let mut prev = f64::INFINITY;
    for it in &trace {
        assert!(it.objective <= prev + 1e-9);
        prev = it.objective;
        assert!(problem.constraints.max_violation(&it.beta) <= 1e-8);
    }
}

#[test]
fn ccp_with_slack_quadratics_matches_convex_path() {
    let ds = correlated_regression(40, 3, 0.2, &[2.0, 1.0, -0.5], 0.2, 103);
    let spec = FeatureMapSpec::affine_x(ds.p_x(), ds.r());
    let eps_lin = 0.05;
    let sched = DeltaSchedule::Eps { eps: eps_lin };
    // level (1,1): active linear constraint only
    let lin_only =
        build_constraint_set(&ds, &spec, (1, 1), &sched, FairnessMode::DisparateImpact, true)
            .unwrap();
    // level (1,2): same linear constraint plus a quadratic that never binds
    // (threshold just below the vacuity bound so the CCP loop really runs)
    let mut with_quad = lin_only.clone();
    let quad = build_constraint_set(&ds, &spec, (1, 2), &sched, FairnessMode::DisparateImpact, true)
        .unwrap()
        .quadratic;
    assert!(!quad.is_empty());
    let lambda = 100.0;
    for mut atom in quad {
        let lmax = atom
            .quad
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, &v| a.max(v.abs()));
        atom.delta = 0.9 * lambda * lmax;
        with_quad.quadratic.push(atom);
    }
    with_quad.level = (1, 2);

    let p1 = FOProblem::new(ds.clone(), spec.clone(), LossSpec::squared(), lin_only, lambda)
        .unwrap();
    let p2 = FOProblem::new(ds, spec, LossSpec::squared(), with_quad, lambda).unwrap();
    let s1 = solve_fo(&p1).unwrap();
    let s2 = solve_fo(&p2).unwrap();
    assert!(s2.iterations >= 1);
    assert!(
        (s1.objective - s2.objective).abs() <= 1e-6 * s1.objective.max(1.0),
        "convex path {} vs ccp {}",
        s1.objective,
        s2.objective
    );
}

#[test]
fn ccp_all_zero_quadratics_reduce_to_convex_path() {
    let ds = correlated_regression(30, 2, 0.4, &[1.0, 1.0], 0.1, 104);
    let spec = FeatureMapSpec::affine_x(ds.p_x(), ds.r());
    let sched = DeltaSchedule::Eps { eps: 0.1 };
    let base = build_constraint_set(&ds, &spec, (1, 1), &sched, FairnessMode::DisparateImpact, true)
        .unwrap();
    let mut with_zero = base.clone();
    with_zero.quadratic.push(QuadAtom {
        m: 1,
        sigma: vec![0],
        quad: DMatrix::zeros(spec.p(), spec.p()),
        delta: 0.001,
        condition: None,
    });
    let p1 = FOProblem::new(ds.clone(), spec.clone(), LossSpec::squared(), base, 50.0).unwrap();
    let p2 = FOProblem::new(ds, spec, LossSpec::squared(), with_zero, 50.0).unwrap();
    let s1 = solve_fo(&p1).unwrap();
    let s2 = solve_fo(&p2).unwrap();
    assert_eq!(s2.iterations, 1);
    for j in 0..spec_p(&s1) {
        assert!((s1.rule.b[(0, j)] - s2.rule.b[(0, j)]).abs() <= 1e-6);
    }
}

fn spec_p(sol: &fairopt::solver::FOSolution) -> usize {
    sol.rule.b.ncols()
}

#[test]
fn hinge_unconstrained_matches_breakpoint_oracle() {
    // single feature, no intercept: breakpoints at 1/(y_i x_i)
    let xs = [0.8, -1.2, 2.0, 0.5, -0.7, 1.4, -2.2, 0.9];
    let ys = [1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0];
    let x = DMatrix::from_column_slice(8, 1, &xs);
    let y = DVector::from_column_slice(&ys);
    let z = DMatrix::from_fn(8, 1, |i, _| (i % 2) as f64);
    let ds = Dataset::from_parts(x, y, z).unwrap();
    let lambda: f64 = 16.0;
    let objective = |beta: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 - y * beta * x).max(0.0))
            .sum::<f64>()
            / xs.len() as f64
    };
    let breakpoints: Vec<f64> = xs.iter().zip(&ys).map(|(&x, &y)| 1.0 / (y * x)).collect();
    let oracle = piecewise_1d_min(objective, &breakpoints, lambda.sqrt());

    let spec = FeatureMapSpec::linear_x(1, 1);
    let problem =
        FOProblem::new(ds, spec, LossSpec::hinge(), empty_constraints((1, 1)), lambda).unwrap();
    let sol = solve_fo(&problem).unwrap();
    assert!(
        (sol.objective - oracle).abs() <= 1e-6 * oracle.max(1.0),
        "solver {} vs oracle {}",
        sol.objective,
        oracle
    );
}

#[test]
fn pinball_unconstrained_matches_quantile_oracle() {
    // intercept-only dosing: optimum is a weighted quantile of y
    let ys = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.6, 5.3, 5.8, 9.7];
    let x = DMatrix::from_element(10, 1, 1.0);
    let y = DVector::from_column_slice(&ys);
    let z = DMatrix::from_fn(10, 1, |i, _| (i % 2) as f64);
    let ds = Dataset::from_parts(x, y, z).unwrap();
    let (over, under) = (1.0, 2.0);
    let lambda: f64 = 400.0;
    let objective = |beta: f64| -> f64 {
        ys.iter()
            .map(|&y| {
                let u = beta - y;
                (over * u).max(under * (-u)).max(0.0)
            })
            .sum::<f64>()
            / ys.len() as f64
    };
    let oracle = piecewise_1d_min(objective, &ys, lambda.sqrt());

    let spec = FeatureMapSpec::linear_x(1, 1);
    let problem = FOProblem::new(
        ds,
        spec,
        LossSpec::pinball(over, under).unwrap(),
        empty_constraints((1, 1)),
        lambda,
    )
    .unwrap();
    let sol = solve_fo(&problem).unwrap();
    assert!(
        (sol.objective - oracle).abs() <= 1e-6 * oracle.max(1.0),
        "solver {} vs oracle {}",
        sol.objective,
        oracle
    );
}

#[test]
fn objective_nonincreasing_in_epsilon() {
    let ds = correlated_regression(80, 3, 0.1, &[2.0, 0.5, -1.0], 0.2, 105);
    let spec = FeatureMapSpec::affine_x(ds.p_x(), ds.r());
    // shrinking ε nests the feasible sets, so the optimal objective can
    // only go up as ε decreases
    for level in [(1usize, 1usize), (1, 2)] {
        let mut prev = f64::NEG_INFINITY;
        for eps in [10.0, 1.0, 0.1, 0.03, 0.01] {
            let sched = DeltaSchedule::Eps { eps };
            let constraints =
                build_constraint_set(&ds, &spec, level, &sched, FairnessMode::DisparateImpact, true)
                    .unwrap();
            let problem =
                FOProblem::new(ds.clone(), spec.clone(), LossSpec::squared(), constraints, 100.0)
                    .unwrap();
            let sol = solve_fo(&problem).unwrap();
            assert!(
                sol.objective + 1e-7 >= prev,
                "objective fell from {prev} to {} as eps shrank to {eps}, level {level:?}",
                sol.objective
            );
            prev = sol.objective;
        }
    }
}

#[test]
fn solution_feasibility_via_generic_evaluator() {
    // feasibility of the returned rule is certified by the independent
    // tensor evaluator, not the solver's own constraint representation
    let ds = correlated_regression(60, 3, 0.2, &[1.0, -2.0, 0.7], 0.3, 106);
    let spec = FeatureMapSpec::affine_x(ds.p_x(), ds.r());
    let eps = 0.08;
    let sched = DeltaSchedule::Eps { eps };
    let level = (2, 2);
    let constraints =
        build_constraint_set(&ds, &spec, level, &sched, FairnessMode::DisparateImpact, false)
            .unwrap();
    let problem =
        FOProblem::new(ds.clone(), spec.clone(), LossSpec::squared(), constraints, 50.0).unwrap();
    let sol = solve_fo(&problem).unwrap();
    // the step-tolerance stopping rule may exhaust the outer cap while the
    // iterate is already feasible and numerically converged
    assert!(sol.max_violation <= 1e-8, "violation {}", sol.max_violation);
    let dims = ScheduleDims {
        n: ds.n(),
        p: spec.p(),
        d: 1,
        r: ds.r(),
        alpha: 1.0,
        rho: 1.0,
    };
    for m in 1..=level.0 {
        for q in 1..=level.1 {
            let delta = sched.delta(m, q, &dims, None).unwrap();
            let res = constraint_residual_generic(&sol.rule, &ds, m, q, DEFAULT_TENSOR_BUDGET)
                .unwrap();
            assert!(
                res <= delta + 1e-8,
                "generic residual {res} exceeds Δ={delta} at ({m},{q})"
            );
        }
    }
}

#[test]
fn ccp_descent_and_feasibility_on_active_fixture() {
    // strong x₁–z dependence and a tight quadratic level so the CCP works
    let ds = correlated_regression(100, 3, 0.15, &[2.5, 0.3, -0.4], 0.2, 107);
    let spec = FeatureMapSpec::affine_x(ds.p_x(), ds.r());
    let sched = DeltaSchedule::Eps { eps: 0.15 };
    let constraints =
        build_constraint_set(&ds, &spec, (1, 2), &sched, FairnessMode::DisparateImpact, true)
            .unwrap();
    assert!(!constraints.quadratic.is_empty());
    let problem = FOProblem::new(ds, spec, LossSpec::squared(), constraints, 50.0).unwrap();
    let (sol, trace) = ccp_solve_traced(&problem).unwrap();
    assert!(sol.max_violation <= 1e-8, "violation {}", sol.max_violation);
    let mut prev = f64::INFINITY;
    for (k, it) in trace.iter().enumerate() {
        assert!(
            it.objective <= prev + 1e-9,
            "objective rose at outer iteration {k}"
        );
        prev = it.objective;
        let viol = problem.constraints.max_violation(&it.beta);
        assert!(viol <= 1e-8, "iterate {k} violates constraints by {viol}");
    }
}

#[test]
fn unsupported_level_is_rejected() {
    let ds = correlated_regression(30, 2, 0.3, &[1.0, 1.0], 0.2, 108);
    let spec = FeatureMapSpec::affine_x(ds.p_x(), ds.r());
    let sched = DeltaSchedule::Eps { eps: 0.1 };
    let constraints =
        build_constraint_set(&ds, &spec, (1, 3), &sched, FairnessMode::DisparateImpact, true)
            .unwrap();
    let problem = FOProblem::new(ds, spec, LossSpec::squared(), constraints, 10.0).unwrap();
    assert!(solve_fo(&problem).is_err());
}

#[test]
fn norm_bound_invariant_holds_on_solutions() {
    let ds = binary_classification(60, 3, 1.0, 109);
    let spec = FeatureMapSpec::affine_x(ds.p_x(), ds.r());
    let sched = DeltaSchedule::Eps { eps: 0.1 };
    for lambda in [1.0, 4.0, 25.0] {
        let constraints =
            build_constraint_set(&ds, &spec, (1, 2), &sched, FairnessMode::DisparateImpact, true)
                .unwrap();
        let problem =
            FOProblem::new(ds.clone(), spec.clone(), LossSpec::hinge(), constraints, lambda)
                .unwrap();
        let sol = solve_fo(&problem).unwrap();
        assert!(sol.rule.coef_norm() <= lambda.sqrt() * (1.0 + 1e-6) + 1e-8);
        if sol.status == SolveStatus::Optimal {
            assert!(sol.max_violation <= 1e-8);
        }
    }
}
