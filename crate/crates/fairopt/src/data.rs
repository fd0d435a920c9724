//! Dataset ingestion and standardization.
//!
//! A [`Dataset`] holds predictors `x`, a target `y`, and protected attributes
//! `z` as numeric matrices. Categorical protected columns are one-hot encoded
//! with the reference level dropped, so `z` always enters the moment tensors
//! as a numeric `n × r` matrix. The original protected values are retained in
//! [`Dataset::z_groups`] / [`Dataset::z_raw`] for fairness metrics.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Predictor,
    Target,
    Protected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Binary,
    Categorical,
    Continuous,
}

/// Role and type for one CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub role: ColumnRole,
    #[serde(rename = "type")]
    pub ctype: ColumnType,
}

/// Column-role map keyed by CSV header name. Ordered so that encodings are
/// deterministic across runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Schema(pub BTreeMap<String, ColumnSpec>);

impl Schema {
    pub fn new() -> Self {
        Schema(BTreeMap::new())
    }

    pub fn with(mut self, name: &str, role: ColumnRole, ctype: ColumnType) -> Self {
        self.0.insert(name.to_string(), ColumnSpec { role, ctype });
        self
    }

    fn validate(&self) -> Result<()> {
        let targets = self.count(ColumnRole::Target);
        let predictors = self.count(ColumnRole::Predictor);
        let protected = self.count(ColumnRole::Protected);
        if targets != 1 {
            return Err(Error::Schema(format!(
                "schema must name exactly one target column (found {targets})"
            )));
        }
        if predictors == 0 {
            return Err(Error::Schema("schema names no predictor columns".into()));
        }
        if protected == 0 {
            return Err(Error::Schema("schema names no protected columns".into()));
        }
        Ok(())
    }

    fn count(&self, role: ColumnRole) -> usize {
        self.0.values().filter(|c| c.role == role).count()
    }
}

/// How the (single) protected attribute should be treated by fairness metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtectedKind {
    Binary,
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    /// Predictors, n × p_x.
    pub x: DMatrix<f64>,
    /// Target values: class labels in {-1, +1} or reals.
    pub y: DVector<f64>,
    /// Protected attributes after encoding, n × r.
    pub z: DMatrix<f64>,
    /// Group id per row (binary: 0/1, categorical: level index) or the raw
    /// continuous value. Drives the fairness-metric variant.
    pub z_raw: DVector<f64>,
    pub z_kind: ProtectedKind,
    /// Level names for categorical protected attributes (index = group id).
    pub z_levels: Vec<String>,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
    /// Per-column flags: true where the column is continuous (standardized).
    pub x_continuous: Vec<bool>,
    pub z_continuous: Vec<bool>,
    /// Rows dropped during ingestion because of missing values.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn r(&self) -> usize {
        self.z.ncols()
    }

    /// Assemble a dataset from pre-built matrices (used by tests and the
    /// experiment harness for synthetic data). All columns are treated as
    /// continuous unless `z` has only 0/1 entries, in which case the protected
    /// attribute is marked binary.
    pub fn from_parts(x: DMatrix<f64>, y: DVector<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::Schema(format!("dataset needs n >= 2 rows, got {n}")));
        }
        if y.len() != n || z.nrows() != n {
            return Err(Error::Shape(format!(
                "row counts differ: x has {n}, y has {}, z has {}",
                y.len(),
                z.nrows()
            )));
        }
        let binary_z = z.ncols() == 1 && z.iter().all(|&v| v == 0.0 || v == 1.0);
        let z_raw = DVector::from_iterator(n, z.column(0).iter().copied());
        let (z_kind, z_levels, z_continuous) = if binary_z {
            (ProtectedKind::Binary, vec!["0".into(), "1".into()], vec![false])
        } else {
            (ProtectedKind::Continuous, Vec::new(), vec![true; z.ncols()])
        };
        Ok(Dataset {
            x_names: (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect(),
            z_names: (0..z.ncols()).map(|j| format!("z{}", j + 1)).collect(),
            x_continuous: vec![true; x.ncols()],
            z_continuous,
            x,
            y,
            z,
            z_raw,
            z_kind,
            z_levels,
            dropped_rows: 0,
        })
    }

    /// Restrict to a subset of rows (used for CV folds and conditioned
    /// constraint construction). Indices must be in range.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            z: self.z.select_rows(idx),
            z_raw: self.z_raw.select_rows(idx),
            z_kind: self.z_kind,
            z_levels: self.z_levels.clone(),
            x_names: self.x_names.clone(),
            z_names: self.z_names.clone(),
            x_continuous: self.x_continuous.clone(),
            z_continuous: self.z_continuous.clone(),
            dropped_rows: 0,
        }
    }
}

/// Per-column location/scale recorded by [`standardize`], plus the empirical
/// bound `alpha` = max(1, max |standardized entry|) over the X and Z columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub z_mean: Vec<f64>,
    pub z_scale: Vec<f64>,
    pub alpha: f64,
}

impl StandardizationParams {
    /// Apply the recorded transform to another dataset (e.g. a held-out fold).
    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.p_x() != self.x_mean.len() || ds.r() != self.z_mean.len() {
            return Err(Error::Shape(format!(
                "standardization params cover {}x/{}z columns, dataset has {}/{}",
                self.x_mean.len(),
                self.z_mean.len(),
                ds.p_x(),
                ds.r()
            )));
        }
        let mut out = ds.clone();
        for j in 0..out.p_x() {
            let (m, s) = (self.x_mean[j], self.x_scale[j]);
            for i in 0..out.n() {
                out.x[(i, j)] = (out.x[(i, j)] - m) / s;
            }
        }
        for j in 0..out.r() {
            let (m, s) = (self.z_mean[j], self.z_scale[j]);
            for i in 0..out.n() {
                out.z[(i, j)] = (out.z[(i, j)] - m) / s;
            }
        }
        if ds.z_kind == ProtectedKind::Continuous && ds.r() >= 1 {
            let (m, s) = (self.z_mean[0], self.z_scale[0]);
            for i in 0..out.n() {
                out.z_raw[i] = (out.z_raw[i] - m) / s;
            }
        }
        Ok(out)
    }

    /// Invert the transform, recovering the original units.
    pub fn invert(&self, ds: &Dataset) -> Dataset {
        let mut out = ds.clone();
        for j in 0..out.p_x() {
            let (m, s) = (self.x_mean[j], self.x_scale[j]);
            for i in 0..out.n() {
                out.x[(i, j)] = out.x[(i, j)] * s + m;
            }
        }
        for j in 0..out.r() {
            let (m, s) = (self.z_mean[j], self.z_scale[j]);
            for i in 0..out.n() {
                out.z[(i, j)] = out.z[(i, j)] * s + m;
            }
        }
        if ds.z_kind == ProtectedKind::Continuous && ds.r() >= 1 {
            let (m, s) = (self.z_mean[0], self.z_scale[0]);
            for i in 0..out.n() {
                out.z_raw[i] = out.z_raw[i] * s + m;
            }
        }
        out
    }
}

/// Center/scale continuous predictor and protected columns to empirical mean 0
/// and variance 1 (1/n convention). Binary and indicator columns are left
/// untouched. Returns the transformed dataset and the recorded parameters.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, StandardizationParams)> {
    let n = ds.n() as f64;
    let mut out = ds.clone();
    let mut x_mean = vec![0.0; ds.p_x()];
    let mut x_scale = vec![1.0; ds.p_x()];
    let mut z_mean = vec![0.0; ds.r()];
    let mut z_scale = vec![1.0; ds.r()];

    let fit = |col: usize,
                   get: &dyn Fn(&Dataset, usize, usize) -> f64,
                   name: &str|
     -> Result<(f64, f64)> {
        let mut sum = 0.0;
        for i in 0..ds.n() {
            sum += get(ds, i, col);
        }
        let mean = sum / n;
        let mut ss = 0.0;
        for i in 0..ds.n() {
            let d = get(ds, i, col) - mean;
            ss += d * d;
        }
        let var = ss / n;
        if var <= 0.0 {
            return Err(Error::DegenerateColumn(name.to_string()));
        }
        Ok((mean, var.sqrt()))
    };

    for j in 0..ds.p_x() {
        if ds.x_continuous[j] {
            let (m, s) = fit(j, &|d, i, c| d.x[(i, c)], &ds.x_names[j])?;
            x_mean[j] = m;
            x_scale[j] = s;
            for i in 0..ds.n() {
                out.x[(i, j)] = (ds.x[(i, j)] - m) / s;
            }
        }
    }
    for j in 0..ds.r() {
        if ds.z_continuous[j] {
            let (m, s) = fit(j, &|d, i, c| d.z[(i, c)], &ds.z_names[j])?;
            z_mean[j] = m;
            z_scale[j] = s;
            for i in 0..ds.n() {
                out.z[(i, j)] = (ds.z[(i, j)] - m) / s;
            }
        }
    }
    if ds.z_kind == ProtectedKind::Continuous && ds.r() >= 1 {
        for i in 0..ds.n() {
            out.z_raw[i] = (ds.z_raw[i] - z_mean[0]) / z_scale[0];
        }
    }

    let mut alpha = 1.0f64;
    for v in out.x.iter().chain(out.z.iter()) {
        alpha = alpha.max(v.abs());
    }
    Ok((
        out,
        StandardizationParams {
            x_mean,
            x_scale,
            z_mean,
            z_scale,
            alpha,
        },
    ))
}

/// A parsed cell: missing, numeric, or free text (categorical level).
enum Cell {
    Missing,
    Num(f64),
    Text(String),
}

fn parse_cell(raw: &str) -> Cell {
    let t = raw.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Cell::Missing;
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Cell::Num(v),
        _ => Cell::Text(t.to_string()),
    }
}

/// Load a CSV file with a header row according to `schema`.
///
/// Rows containing missing values are dropped and counted. Categorical
/// protected columns are one-hot encoded with the (lexicographically first)
/// reference level dropped. Binary columns must contain exactly two distinct
/// values; for targets these map to {-1, +1} and for protected columns to
/// {0, 1}, smaller value first.
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    for name in schema.0.keys() {
        if !headers.iter().any(|h| h == name) {
            return Err(Error::Schema(format!(
                "column '{name}' named in schema is missing from the CSV header"
            )));
        }
    }
    let col_idx: BTreeMap<&str, usize> = schema
        .0
        .keys()
        .map(|name| {
            let idx = headers.iter().position(|h| h == name).unwrap();
            (name.as_str(), idx)
        })
        .collect();

    // First pass: parse rows, dropping those with missing cells.
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut dropped = 0usize;
    for (ridx, record) in rdr.records().enumerate() {
        let record = record?;
        let mut cells = Vec::with_capacity(schema.0.len());
        let mut missing = false;
        for (name, spec) in schema.0.iter() {
            let raw = record.get(col_idx[name.as_str()]).unwrap_or("");
            let cell = parse_cell(raw);
            match (&cell, spec.ctype) {
                (Cell::Missing, _) => missing = true,
                (Cell::Text(t), ColumnType::Continuous) => {
                    return Err(Error::Parse {
                        row: ridx + 2, // 1-based, after header
                        column: name.clone(),
                        message: format!("expected a number, found '{t}'"),
                    });
                }
                _ => {}
            }
            cells.push(cell);
        }
        if missing {
            dropped += 1;
        } else {
            rows.push(cells);
        }
    }
    let n = rows.len();
    if n < 2 {
        return Err(Error::Schema(format!(
            "dataset needs n >= 2 complete rows, got {n} ({dropped} dropped)"
        )));
    }

    // Column positions within the parsed row vectors follow schema order.
    let specs: Vec<(&String, &ColumnSpec)> = schema.0.iter().collect();
    let cell_key = |name: &str| specs.iter().position(|(n, _)| n.as_str() == name).unwrap();

    // Distinct levels for binary/categorical columns.
    let levels_of = |name: &str| -> Vec<String> {
        let k = cell_key(name);
        let mut levels: Vec<String> = Vec::new();
        for row in &rows {
            let lv = match &row[k] {
                Cell::Num(v) => format_level(*v),
                Cell::Text(t) => t.clone(),
                Cell::Missing => unreachable!(),
            };
            if !levels.contains(&lv) {
                levels.push(lv);
            }
        }
        levels.sort_by(|a, b| compare_levels(a, b));
        levels
    };

    let mut x_cols: Vec<(String, Vec<f64>, bool)> = Vec::new();
    let mut z_cols: Vec<(String, Vec<f64>, bool)> = Vec::new();
    let mut y_col: Option<Vec<f64>> = None;
    let mut z_raw: Option<(Vec<f64>, ProtectedKind, Vec<String>)> = None;
    let protected_count = schema.count(ColumnRole::Protected);

    for (name, spec) in specs.iter() {
        let k = cell_key(name);
        match spec.ctype {
            ColumnType::Continuous => {
                let vals: Vec<f64> = rows
                    .iter()
                    .map(|row| match &row[k] {
                        Cell::Num(v) => *v,
                        _ => unreachable!(),
                    })
                    .collect();
                match spec.role {
                    ColumnRole::Predictor => x_cols.push(((*name).clone(), vals, true)),
                    ColumnRole::Target => y_col = Some(vals),
                    ColumnRole::Protected => {
                        if protected_count == 1 {
                            z_raw = Some((vals.clone(), ProtectedKind::Continuous, Vec::new()));
                        }
                        z_cols.push(((*name).clone(), vals, true));
                    }
                }
            }
            ColumnType::Binary => {
                let levels = levels_of(name);
                if levels.len() != 2 {
                    return Err(Error::Schema(format!(
                        "binary column '{name}' has {} distinct values (expected 2): {:?}",
                        levels.len(),
                        levels
                    )));
                }
                let (lo, hi) = match spec.role {
                    ColumnRole::Target => (-1.0, 1.0),
                    _ => (0.0, 1.0),
                };
                let vals: Vec<f64> = rows
                    .iter()
                    .map(|row| {
                        let lv = match &row[k] {
                            Cell::Num(v) => format_level(*v),
                            Cell::Text(t) => t.clone(),
                            Cell::Missing => unreachable!(),
                        };
                        if lv == levels[0] {
                            lo
                        } else {
                            hi
                        }
                    })
                    .collect();
                match spec.role {
                    ColumnRole::Predictor => x_cols.push(((*name).clone(), vals, false)),
                    ColumnRole::Target => y_col = Some(vals),
                    ColumnRole::Protected => {
                        if protected_count == 1 {
                            z_raw = Some((vals.clone(), ProtectedKind::Binary, levels.clone()));
                        }
                        z_cols.push(((*name).clone(), vals, false));
                    }
                }
            }
            ColumnType::Categorical => {
                let levels = levels_of(name);
                if levels.len() < 2 {
                    return Err(Error::Schema(format!(
                        "categorical column '{name}' has a single level '{}'",
                        levels[0]
                    )));
                }
                if spec.role == ColumnRole::Target {
                    return Err(Error::Schema(format!(
                        "categorical target '{name}' is not supported; declare it binary"
                    )));
                }
                let ids: Vec<usize> = rows
                    .iter()
                    .map(|row| {
                        let lv = match &row[k] {
                            Cell::Num(v) => format_level(*v),
                            Cell::Text(t) => t.clone(),
                            Cell::Missing => unreachable!(),
                        };
                        levels.iter().position(|l| *l == lv).unwrap()
                    })
                    .collect();
                if spec.role == ColumnRole::Protected && protected_count == 1 {
                    z_raw = Some((
                        ids.iter().map(|&i| i as f64).collect(),
                        ProtectedKind::Categorical,
                        levels.clone(),
                    ));
                }
                // One-hot indicators, reference level (index 0) dropped.
                for (li, level) in levels.iter().enumerate().skip(1) {
                    let vals: Vec<f64> = ids.iter().map(|&id| (id == li) as u8 as f64).collect();
                    let cname = format!("{name}={level}");
                    match spec.role {
                        ColumnRole::Predictor => x_cols.push((cname, vals, false)),
                        ColumnRole::Protected => z_cols.push((cname, vals, false)),
                        ColumnRole::Target => unreachable!(),
                    }
                }
            }
        }
    }

    let y = DVector::from_vec(y_col.expect("schema validated to contain a target"));
    let p_x = x_cols.len();
    let r = z_cols.len();
    if p_x == 0 || r == 0 {
        return Err(Error::Schema("no predictor or protected columns after encoding".into()));
    }
    let mut x = DMatrix::zeros(n, p_x);
    for (j, (_, vals, _)) in x_cols.iter().enumerate() {
        for i in 0..n {
            x[(i, j)] = vals[i];
        }
    }
    let mut z = DMatrix::zeros(n, r);
    for (j, (_, vals, _)) in z_cols.iter().enumerate() {
        for i in 0..n {
            z[(i, j)] = vals[i];
        }
    }
    // Multiple protected source columns: fall back to the first encoded column
    // as the group variable, treated as continuous for metric purposes.
    let (z_raw_vals, z_kind, z_levels) = z_raw.unwrap_or_else(|| {
        (
            z_cols[0].1.clone(),
            ProtectedKind::Continuous,
            Vec::new(),
        )
    });

    Ok(Dataset {
        x_names: x_cols.iter().map(|(n, _, _)| n.clone()).collect(),
        z_names: z_cols.iter().map(|(n, _, _)| n.clone()).collect(),
        x_continuous: x_cols.iter().map(|(_, _, c)| *c).collect(),
        z_continuous: z_cols.iter().map(|(_, _, c)| *c).collect(),
        x,
        y,
        z,
        z_raw: DVector::from_vec(z_raw_vals),
        z_kind,
        z_levels,
        dropped_rows: dropped,
    })
}

/// Render a numeric level compactly ("1" not "1.0") so numeric and text
/// categorical files encode identically.
fn format_level(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Numeric-aware level ordering: numbers sort numerically, text lexically.
fn compare_levels(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal),
        _ => a.cmp(b),
    }
}
