//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A cell could not be parsed in the declared format. Locations are
    /// 1-based and count the header as row 1.
    #[error("{path}: row {row}, column {col}: cannot parse cell {cell:?}: {reason}")]
    BadCell {
        path: String,
        row: usize,
        col: usize,
        cell: String,
        reason: String,
    },

    /// A data row has a different width than the header.
    #[error("{path}: row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },

    /// A missing value (empty cell or `?`) was encountered.
    #[error("{path}: row {row}, column {col}: missing value")]
    MissingValue { path: String, row: usize, col: usize },

    #[error("{path}: label column {label:?} not found")]
    UnknownLabel { path: String, label: String },

    #[error("{path}: {reason}")]
    BadFormat { path: String, reason: String },

    #[error("{0}")]
    EmptyInput(String),

    #[error("column {col} out of range for table with {ncols} columns")]
    ColumnOutOfRange { col: usize, ncols: usize },

    #[error("column {col} is not a factor column")]
    NotAFactor { col: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("{0}")]
    InvalidArgument(String),

    /// Training loss became non-finite.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A trial log does not match the expected trials.csv schema.
    #[error("{path}: bad trial log schema: {reason}")]
    BadLogSchema { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
