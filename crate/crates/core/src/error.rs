use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("duplicate house id {0:?}")]
    DuplicateId(String),
    #[error("a village needs at least 2 houses, got {0}")]
    TooFewHouses(usize),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("matrix factorization failed: {0}")]
    Factorization(String),
    #[error("Newton iteration diverged: {0}")]
    Divergence(String),
    #[error("the design contains no observations")]
    EmptyDesign,
    #[error("intercept calibration failed: {0}")]
    Calibration(String),
    #[error("status oracle failed for house {id:?}: {message}")]
    Oracle { id: String, message: String },
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Stable machine-readable code for CLI and HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
            Error::Schema(_) => "schema",
            Error::DuplicateId(_) => "duplicate_id",
            Error::TooFewHouses(_) => "too_few_houses",
            Error::Invalid { .. } => "invalid",
            Error::Factorization(_) => "factorization",
            Error::Divergence(_) => "divergence",
            Error::EmptyDesign => "empty_design",
            Error::Calibration(_) => "calibration",
            Error::Oracle { .. } => "oracle",
            Error::AtIteration { source, .. } => source.code(),
            Error::Json(_) => "json",
        }
    }

    /// Field name for validation-style errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::Invalid { field, .. } => Some(field),
            Error::AtIteration { source, .. } => source.field(),
            _ => None,
        }
    }
}
