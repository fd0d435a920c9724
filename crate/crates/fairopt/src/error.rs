//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Schema/usage problems: unknown columns, bad roles, invalid grids.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell failed to parse as the declared type.
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// A continuous column with zero variance cannot be standardized.
    #[error("degenerate column '{0}': zero variance in continuous column")]
    DegenerateColumn(String),

    /// Dimension mismatch between inputs.
    #[error("shape error: {0}")]
    Shape(String),

    /// Requested moment level exceeds the configured tensor budget.
    #[error("level limit: tensor for m={m}, q={q} needs {entries} entries (budget {budget}); lower the level")]
    LevelLimit {
        m: usize,
        q: usize,
        entries: u128,
        budget: usize,
    },

    /// NaN or infinity encountered where a finite value is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Fairness mode incompatible with the protected attribute type.
    #[error("mode error: {0}")]
    Mode(String),

    /// Conditioning category is empty or too small.
    #[error("category error: {0}")]
    Category(String),

    /// A fairness metric received fewer groups than it requires.
    #[error("group error: {0}")]
    Group(String),

    /// An equalized-odds cell (class, group) is empty.
    #[error("cell error: no samples for class {class} in group '{group}'")]
    Cell { class: String, group: String },

    /// Unsupported hierarchy level or problem shape.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The convex subproblem solver failed.
    #[error("solver error: {0}")]
    Solver(String),

    /// Moment residuals exceed the tolerance required by the bound.
    #[error("residual too large: worst (m={m}, q={q}) has residual {value:.6e} > tolerance {tol:.6e}")]
    ResidualTooLarge {
        m: usize,
        q: usize,
        value: f64,
        tol: f64,
    },

    /// A plug-in moment estimate is invalid (nonpositive).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Invalid experiment or schedule configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid probability mass function.
    #[error("pmf error: {0}")]
    Pmf(String),

    /// Invalid parameter value.
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 solver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::Unsupported(_) => 1,
            Error::Solver(_) => 3,
            _ => 2,
        }
    }
}
