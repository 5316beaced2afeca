use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("length mismatch in {op}: {left} vs {right}")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("{value} is outside the domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("first-day criterion never met for district {0}")]
    FirstDayNotReached(String),

    #[error("strategy {strategy} requires field `{field}` (district {district})")]
    MissingField {
        strategy: String,
        field: &'static str,
        district: String,
    },

    #[error("{0}")]
    Protocol(String),

    #[error("malformed input {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error("duplicate district id `{0}`")]
    DuplicateId(String),

    #[error("no series rows in {0}")]
    NoSeriesRows(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
