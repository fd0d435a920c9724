//! Result emission: a CSV of sweep points (with frontier markers) and a JSON
//! metadata record carrying everything needed to reproduce the run.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AccuracyMetric, ExperimentConfig, ParetoPoint};
use crate::error::{Error, Result};
use crate::metrics::KsMethod;
use crate::solver::SolverOpts;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub library_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub solver_opts: SolverOpts,
    pub accuracy_metric: AccuracyMetric,
    pub fairness_method: Option<KsMethod>,
    /// Recorded modeling choices that are not derivable from the config.
    pub notes: Vec<String>,
}

impl RunMetadata {
    pub fn new(
        config: &ExperimentConfig,
        fairness_method: Option<KsMethod>,
        solver_opts: SolverOpts,
    ) -> Self {
        let notes = vec![
            "continuous protected columns are standardized along with predictors".to_string(),
            "ccp stopping: step tolerance and iteration cap from solver_opts".to_string(),
            "finite-moment schedule plugs in empirical directional moment estimates".to_string(),
            "frontier segments between adjacent points are achievable by randomizing \
             between the two corresponding rules"
                .to_string(),
        ];
        RunMetadata {
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            solver_opts,
            accuracy_metric: AccuracyMetric::for_task(config.task),
            fairness_method,
            notes,
        }
    }
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn same_point(a: &ParetoPoint, b: &ParetoPoint) -> bool {
    a.level == b.level && a.epsilon == b.epsilon && a.lambda == b.lambda
}

/// Write the sweep CSV (one row per point, frontier membership marked) and
/// the JSON metadata file.
pub fn emit_results(
    points: &[ParetoPoint],
    frontier: &[ParetoPoint],
    csv_path: &Path,
    json_path: &Path,
    meta: &RunMetadata,
) -> Result<()> {
    let mut file = std::fs::File::create(csv_path)?;
    writeln!(
        file,
        "level_g,level_h,epsilon,lambda,accuracy,fairness,on_frontier"
    )?;
    for p in points {
        let on_frontier = frontier.iter().any(|f| same_point(f, p));
        writeln!(
            file,
            "{},{},{},{},{},{},{}",
            p.level.0,
            p.level.1,
            p.epsilon.map(fmt_f64).unwrap_or_default(),
            fmt_f64(p.lambda),
            fmt_f64(p.accuracy),
            fmt_f64(p.fairness),
            on_frontier
        )?;
    }
    let json = serde_json::to_string_pretty(meta)?;
    std::fs::write(json_path, json)?;
    Ok(())
}

/// Row recovered from an emitted CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedPoint {
    pub level: (usize, usize),
    pub epsilon: Option<f64>,
    pub lambda: f64,
    pub accuracy: f64,
    pub fairness: f64,
    pub on_frontier: bool,
}

/// Parse a previously emitted points CSV.
pub fn read_points_csv(path: &Path) -> Result<Vec<EmittedPoint>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |k: usize| -> &str { record.get(k).unwrap_or("") };
        let parse = |k: usize, name: &str| -> Result<f64> {
            field(k).parse::<f64>().map_err(|_| Error::Parse {
                row: i + 2,
                column: name.to_string(),
                message: format!("expected a number, found '{}'", field(k)),
            })
        };
        let eps = if field(2).is_empty() {
            None
        } else {
            Some(parse(2, "epsilon")?)
        };
        out.push(EmittedPoint {
            level: (parse(0, "level_g")? as usize, parse(1, "level_h")? as usize),
            epsilon: eps,
            lambda: parse(3, "lambda")?,
            accuracy: parse(4, "accuracy")?,
            fairness: parse(5, "fairness")?,
            on_frontier: field(6) == "true",
        });
    }
    Ok(out)
}

/// Rehydrate emitted rows into ParetoPoints for frontier recomputation.
pub fn emitted_to_points(rows: &[EmittedPoint], metric: AccuracyMetric) -> Vec<ParetoPoint> {
    rows.iter()
        .map(|r| ParetoPoint {
            level: r.level,
            epsilon: r.epsilon,
            lambda: r.lambda,
            accuracy: r.accuracy,
            fairness: r.fairness,
            train_objective: f64::NAN,
            accuracy_metric: metric,
            fairness_method: KsMethod::Binary,
            folds_total: 1,
            folds_failed: 0,
        })
        .collect()
}
