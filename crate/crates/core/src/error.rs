use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GenexError>;

#[derive(Debug, Error)]
pub enum GenexError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{file}: row {row}, column {column}: cannot parse {cell:?} as a number")]
    NonNumeric {
        file: String,
        row: usize,
        column: usize,
        cell: String,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label {label} at row {row} is not below the declared class count {num_classes}")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("feature index {index} out of range for {n} features")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bucket has no instances")]
    EmptyBucket,

    #[error("combinatorial budget exceeded: {required} evaluations requested, limit is {limit}")]
    BudgetExceeded { required: u128, limit: u128 },

    #[error("oracle failed for instance {instance}: {message}")]
    Oracle { instance: usize, message: String },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
}

impl GenexError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GenexError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        GenexError::Format {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        GenexError::InvalidArgument(message.into())
    }
}
