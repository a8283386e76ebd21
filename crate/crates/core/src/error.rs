//! Error type shared by every module of the crate.

use std::path::PathBuf;

use crate::data::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-numeric cell at row {row}, column {col}: {text:?}")]
    NonNumeric { row: usize, col: usize, text: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("invalid model: {0}")]
    Validation(ValidationReport),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Numerical failure, e.g. every EM initialization collapsed.
    #[error("degenerate fit: {0}")]
    Degenerate(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Short machine-readable category used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::RaggedRow { .. } | Error::NonNumeric { .. } | Error::Parse(_) => "parse",
            Error::Validation(_) => "validation",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Unsupported(_) => "unsupported",
            Error::Degenerate(_) => "numerical",
        }
    }
}
