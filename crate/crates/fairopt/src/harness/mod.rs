//! Experiment driver: cross-validation sweeps over the hyperparameter grid,
//! Pareto frontier assembly, the fair hypothesis test, and result emission.

pub mod hypothesis;
pub mod pareto;
pub mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{build_constraint_set, FairnessMode};
use crate::data::{load_csv, standardize, ColumnSpec, Dataset, Schema};
use crate::error::{Error, Result};
use crate::featmap::FeatureMapSpec;
use crate::metrics::{auc, fairness_report, fairness_value, out_of_sample_r2, FairnessReport, KsMethod};
use crate::schedule::DeltaSchedule;
use crate::solver::{solve_fo, FOProblem, FOSolution, LossSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Svm,
    Regression,
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMetric {
    Auc,
    Or2,
    PinballRisk,
}

impl AccuracyMetric {
    pub fn higher_is_better(self) -> bool {
        !matches!(self, AccuracyMetric::PinballRisk)
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Svm => AccuracyMetric::Auc,
            Task::Regression => AccuracyMetric::Or2,
            Task::Quantile => AccuracyMetric::PinballRisk,
        }
    }
}

/// Schedule selection key, expanded per grid point into a [`DeltaSchedule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Bounded,
    Subgaussian,
    Finite,
    Eps,
    EpsConc,
    Manual,
}

fn default_levels() -> Vec<(usize, usize)> {
    vec![(1, 1), (1, 2), (2, 1), (2, 2)]
}

fn default_folds() -> usize {
    5
}

fn default_repeats() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_pinball_over() -> f64 {
    1.0
}

fn default_pinball_under() -> f64 {
    2.0
}

fn default_schedule() -> ScheduleKind {
    ScheduleKind::Eps
}

fn default_mode() -> FairnessMode {
    FairnessMode::DisparateImpact
}

fn default_lambdas() -> Vec<f64> {
    vec![10.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// CSV path; optional when a dataset is supplied programmatically.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub schema: BTreeMap<String, ColumnSpec>,
    pub task: Task,
    /// Reproducibility seed (mandatory).
    pub seed: u64,
    #[serde(default = "default_levels")]
    pub levels: Vec<(usize, usize)>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    /// Sub-Gaussian schedule parameters (user-supplied).
    #[serde(default)]
    pub subgaussian_m: Option<f64>,
    #[serde(default)]
    pub subgaussian_sigma2: Option<f64>,
    /// Manual Δ table keyed "m,q".
    #[serde(default)]
    pub manual_deltas: Option<BTreeMap<String, f64>>,
    #[serde(default = "default_mode")]
    pub mode: FairnessMode,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_pinball_over")]
    pub pinball_over: f64,
    #[serde(default = "default_pinball_under")]
    pub pinball_under: f64,
    #[serde(default = "default_true")]
    pub binary_reduction: bool,
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Clamp negative predictions at evaluation; defaults on for quantile.
    #[serde(default)]
    pub clamp_negative: Option<bool>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.lambdas.is_empty() {
            return Err(Error::Config("level and lambda grids must be nonempty".into()));
        }
        if self.uses_eps_grid() && self.epsilons.is_empty() {
            return Err(Error::Config("epsilon grid must be nonempty for ε schedules".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        for &(g, h) in &self.levels {
            if g == 0 || h == 0 || h > 2 {
                return Err(Error::Config(format!(
                    "trainable levels need 𝔤 >= 1 and 𝔥 ∈ {{1,2}}, got ({g},{h})"
                )));
            }
        }
        for &l in &self.lambdas {
            if l < 1.0 {
                return Err(Error::Config(format!("lambda grid values must be >= 1, got {l}")));
            }
        }
        Ok(())
    }

    pub fn uses_eps_grid(&self) -> bool {
        matches!(self.schedule, ScheduleKind::Eps | ScheduleKind::EpsConc)
    }

    pub fn loss(&self) -> Result<LossSpec> {
        match self.task {
            Task::Svm => Ok(LossSpec::hinge()),
            Task::Regression => Ok(LossSpec::squared()),
            Task::Quantile => LossSpec::pinball(self.pinball_over, self.pinball_under),
        }
    }

    pub fn clamp_effective(&self) -> bool {
        self.clamp_negative.unwrap_or(self.task == Task::Quantile)
    }

    pub fn schema_struct(&self) -> Schema {
        Schema(self.schema.clone())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let path = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Config("config names no dataset path".into()))?;
        load_csv(path, &self.schema_struct())
    }

    /// Expand the schedule for one grid ε (ignored by non-ε schedules).
    pub fn delta_schedule(&self, eps: Option<f64>) -> Result<DeltaSchedule> {
        match self.schedule {
            ScheduleKind::Eps => Ok(DeltaSchedule::Eps {
                eps: eps.ok_or_else(|| Error::Config("ε schedule needs an epsilon".into()))?,
            }),
            ScheduleKind::EpsConc => Ok(DeltaSchedule::EpsConc {
                eps: eps.ok_or_else(|| Error::Config("ε schedule needs an epsilon".into()))?,
            }),
            ScheduleKind::Bounded => Ok(DeltaSchedule::Bounded),
            ScheduleKind::Subgaussian => Ok(DeltaSchedule::Subgaussian {
                m_const: self.subgaussian_m.ok_or_else(|| {
                    Error::Config("subgaussian schedule needs subgaussian_m".into())
                })?,
                sigma2: self.subgaussian_sigma2.ok_or_else(|| {
                    Error::Config("subgaussian schedule needs subgaussian_sigma2".into())
                })?,
            }),
            ScheduleKind::Finite => Ok(DeltaSchedule::Finite),
            ScheduleKind::Manual => Ok(DeltaSchedule::Manual {
                table: self
                    .manual_deltas
                    .clone()
                    .ok_or_else(|| Error::Config("manual schedule needs manual_deltas".into()))?,
            }),
        }
    }
}

/// One hyperparameter tuple with fold-aggregated mean metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub level: (usize, usize),
    pub epsilon: Option<f64>,
    pub lambda: f64,
    /// Mean held-out accuracy (AUC / OR² / pinball risk by task).
    pub accuracy: f64,
    /// Mean held-out fairness value (KS variant by protected type).
    pub fairness: f64,
    /// Mean training objective across folds.
    pub train_objective: f64,
    pub accuracy_metric: AccuracyMetric,
    pub fairness_method: KsMethod,
    pub folds_total: usize,
    pub folds_failed: usize,
}

impl ParetoPoint {
    pub fn flagged(&self) -> bool {
        self.folds_failed > 0
    }

    pub fn valid(&self) -> bool {
        self.folds_failed < self.folds_total && self.accuracy.is_finite() && self.fairness.is_finite()
    }
}

/// Deterministic per-repeat RNG derived from the master seed.
fn repeat_rng(seed: u64, repeat: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed ^ (repeat as u64)
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(0x243f_6a88_85a3_08d3),
    )
}

/// k-fold assignment; stratified by the ±1 label for classification.
fn fold_assignment(ds: &Dataset, k: usize, stratify: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = ds.n();
    let mut assignment = vec![0usize; n];
    if stratify {
        let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            by_class
                .entry(if ds.y[i] > 0.0 { 1 } else { -1 })
                .or_default()
                .push(i);
        }
        let mut next = 0usize;
        for (_, mut idx) in by_class {
            idx.shuffle(rng);
            for i in idx {
                assignment[i] = next % k;
                next += 1;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % k;
        }
    }
    assignment
}

struct FoldEval {
    accuracy: f64,
    fairness: f64,
    objective: f64,
}

/// Train on the training rows and evaluate accuracy + fairness on the
/// held-out rows for one hyperparameter tuple.
#[allow(clippy::too_many_arguments)]
fn run_fold(
    config: &ExperimentConfig,
    ds: &Dataset,
    level: (usize, usize),
    eps: Option<f64>,
    lambda: f64,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<FoldEval> {
    let train_raw = ds.select_rows(train_idx);
    let test_raw = ds.select_rows(test_idx);
    let (train, test) = if config.standardize {
        let (train, params) = standardize(&train_raw)?;
        (train, params.transform(&test_raw)?)
    } else {
        (train_raw, test_raw)
    };

    let spec = FeatureMapSpec::affine_x(train.p_x(), train.r());
    let schedule = config.delta_schedule(eps)?;
    let constraints = build_constraint_set(
        &train,
        &spec,
        level,
        &schedule,
        config.mode,
        config.binary_reduction,
    )?;
    let loss = config.loss()?;
    let problem = FOProblem::new(train.clone(), spec, loss, constraints, lambda)?;
    let solution = solve_fo(&problem)?;

    let mut scores: Vec<f64> = solution.rule.scores(&test)?.iter().copied().collect();
    if config.clamp_effective() {
        for s in scores.iter_mut() {
            *s = s.max(0.0);
        }
    }
    let y_test: Vec<f64> = test.y.iter().copied().collect();
    let accuracy = match config.task {
        Task::Svm => auc(&scores, &y_test)?,
        Task::Regression => {
            let y_train_mean = train.y.iter().sum::<f64>() / train.n() as f64;
            out_of_sample_r2(&scores, &y_test, y_train_mean)?
        }
        Task::Quantile => {
            // mean pinball risk of the (possibly clamped) predictions
            let (over, under) = (config.pinball_over, config.pinball_under);
            scores
                .iter()
                .zip(&y_test)
                .map(|(s, y)| {
                    let u = s - y;
                    (over * u).max(under * (-u)).max(0.0)
                })
                .sum::<f64>()
                / y_test.len() as f64
        }
    };
    let (fair, _) = fairness_value(&scores, &test)?;
    Ok(FoldEval {
        accuracy,
        fairness: fair,
        objective: solution.objective,
    })
}

/// Run the repeated, seeded k-fold sweep over the full hyperparameter grid.
///
/// Work units run in parallel; results are keyed and sorted before
/// aggregation so the output is identical regardless of worker count. Failed
/// fold solves flag the point rather than dropping it.
pub fn run_cv(config: &ExperimentConfig, ds: &Dataset) -> Result<Vec<ParetoPoint>> {
    config.validate()?;
    if ds.n() < 2 * config.folds {
        return Err(Error::Config(format!(
            "dataset with n = {} is too small for {} folds",
            ds.n(),
            config.folds
        )));
    }
    let eps_grid: Vec<Option<f64>> = if config.uses_eps_grid() {
        config.epsilons.iter().map(|&e| Some(e)).collect()
    } else {
        vec![None]
    };
    let mut tuples = Vec::new();
    for &level in &config.levels {
        for &eps in &eps_grid {
            for &lambda in &config.lambdas {
                tuples.push((level, eps, lambda));
            }
        }
    }

    // Fold assignments per repeat, computed up front for determinism.
    let stratify = config.task == Task::Svm;
    let assignments: Vec<Vec<usize>> = (0..config.repeats)
        .map(|rep| {
            let mut rng = repeat_rng(config.seed, rep);
            fold_assignment(ds, config.folds, stratify, &mut rng)
        })
        .collect();

    let mut units = Vec::new();
    for (tid, _) in tuples.iter().enumerate() {
        for rep in 0..config.repeats {
            for fold in 0..config.folds {
                units.push((tid, rep, fold));
            }
        }
    }

    let results: Vec<((usize, usize, usize), std::result::Result<FoldEval, String>)> = units
        .par_iter()
        .map(|&(tid, rep, fold)| {
            let (level, eps, lambda) = tuples[tid];
            let assignment = &assignments[rep];
            let train_idx: Vec<usize> = (0..ds.n()).filter(|&i| assignment[i] != fold).collect();
            let test_idx: Vec<usize> = (0..ds.n()).filter(|&i| assignment[i] == fold).collect();
            let out = run_fold(config, ds, level, eps, lambda, &train_idx, &test_idx)
                .map_err(|e| e.to_string());
            ((tid, rep, fold), out)
        })
        .collect();

    let mut sorted = results;
    sorted.sort_by_key(|(key, _)| *key);

    let fairness_method = match ds.z_kind {
        crate::data::ProtectedKind::Binary => KsMethod::Binary,
        crate::data::ProtectedKind::Categorical => KsMethod::Categorical,
        crate::data::ProtectedKind::Continuous => KsMethod::JointProduct,
    };
    let metric = AccuracyMetric::for_task(config.task);
    let mut points = Vec::with_capacity(tuples.len());
    for (tid, &(level, eps, lambda)) in tuples.iter().enumerate() {
        let mut acc_sum = 0.0;
        let mut fair_sum = 0.0;
        let mut obj_sum = 0.0;
        let mut ok = 0usize;
        let mut failed = 0usize;
        for ((t, _, _), res) in sorted.iter().filter(|((t, _, _), _)| *t == tid) {
            debug_assert_eq!(*t, tid);
            match res {
                Ok(eval) => {
                    acc_sum += eval.accuracy;
                    fair_sum += eval.fairness;
                    obj_sum += eval.objective;
                    ok += 1;
                }
                Err(_) => failed += 1,
            }
        }
        let denom = ok.max(1) as f64;
        points.push(ParetoPoint {
            level,
            epsilon: eps,
            lambda,
            accuracy: if ok > 0 { acc_sum / denom } else { f64::NAN },
            fairness: if ok > 0 { fair_sum / denom } else { f64::NAN },
            train_objective: if ok > 0 { obj_sum / denom } else { f64::NAN },
            accuracy_metric: metric,
            fairness_method,
            folds_total: ok + failed,
            folds_failed: failed,
        });
    }
    Ok(points)
}

/// Full-data training output for the `train` CLI path.
#[derive(Debug, Clone, Serialize)]
pub struct TrainOutput {
    pub solution: FOSolution,
    pub report: FairnessReport,
    pub level: (usize, usize),
    pub epsilon: Option<f64>,
    pub lambda: f64,
}

/// Solve once on the full dataset with the first grid entries (or explicit
/// overrides) and report training diagnostics.
pub fn train_full(
    config: &ExperimentConfig,
    ds: &Dataset,
    level: Option<(usize, usize)>,
    eps: Option<f64>,
    lambda: Option<f64>,
) -> Result<TrainOutput> {
    config.validate()?;
    let level = level.unwrap_or(config.levels[0]);
    let eps = if config.uses_eps_grid() {
        Some(match eps {
            Some(e) => e,
            None => config.epsilons[0],
        })
    } else {
        None
    };
    let lambda = lambda.unwrap_or(config.lambdas[0]);

    let prepared = if config.standardize {
        standardize(ds)?.0
    } else {
        ds.clone()
    };
    let spec = FeatureMapSpec::affine_x(prepared.p_x(), prepared.r());
    let schedule = config.delta_schedule(eps)?;
    let constraints = build_constraint_set(
        &prepared,
        &spec,
        level,
        &schedule,
        config.mode,
        config.binary_reduction,
    )?;
    let problem = FOProblem::new(prepared.clone(), spec, config.loss()?, constraints, lambda)?;
    let solution = solve_fo(&problem)?;
    let mut scores: Vec<f64> = solution.rule.scores(&prepared)?.iter().copied().collect();
    if config.clamp_effective() {
        for s in scores.iter_mut() {
            *s = s.max(0.0);
        }
    }
    let (g, h) = level;
    let report = fairness_report(&scores, &prepared, g, h.max(2))?;
    Ok(TrainOutput {
        solution,
        report,
        level,
        epsilon: eps,
        lambda,
    })
}
