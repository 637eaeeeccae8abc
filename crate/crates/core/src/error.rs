use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimators, loaders and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column {column:?}: non-numeric value {value:?}")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },

    #[error("column {0:?} not found in header")]
    MissingColumn(String),

    #[error("single class: every label is {0:?}")]
    SingleClass(String),

    #[error("more than two classes: found labels {0:?}")]
    TooManyClasses(Vec<String>),

    #[error("non-square distance matrix: {rows} rows but row {row} has {cols} columns")]
    NonSquare { rows: usize, row: usize, cols: usize },

    #[error("negative distance {value} at ({row}, {col})")]
    NegativeDistance { row: usize, col: usize, value: f64 },

    #[error("asymmetric distance matrix: d[{row}][{col}] = {forward} but d[{col}][{row}] = {backward}")]
    Asymmetric {
        row: usize,
        col: usize,
        forward: f64,
        backward: f64,
    },

    #[error("label count {labels} does not match matrix size {n}")]
    LabelMismatch { labels: usize, n: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("k = {k} exceeds the {available} eligible reference points")]
    KTooLarge { k: usize, available: usize },

    #[error("rank condition violated: exact nulling needs L > d - 1, got L = {ensemble_size} for d = {dim}")]
    RankCondition { ensemble_size: usize, dim: usize },

    #[error("weight system is ill-conditioned (condition number {condition:.3e}); choose a better spread ℓ grid")]
    IllConditioned { condition: f64 },

    #[error("ℓ = {first} and ℓ = {second} both round to k = {k}; widen the ℓ spread")]
    CollapsedK { first: f64, second: f64, k: usize },

    #[error("weight optimisation did not converge: {0}")]
    NoConvergence(String),

    #[error("no bounds requested")]
    NoBoundsRequested,

    #[error("{failed} of {total} bootstrap replicates failed")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("operation needs {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
