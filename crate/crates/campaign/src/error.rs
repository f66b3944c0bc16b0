use std::fmt;

use serde::Serialize;

/// How a failed request should be reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// The request itself is malformed or fails validation.
    Invalid,
    /// The request is well formed but not allowed in the campaign's state.
    Conflict,
    NotFound,
    Internal,
}

/// Error body shared by the HTTP API and the CLI: `{code, message, field?}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ServiceError {
    #[serde(skip)]
    pub kind: ErrorKind,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ServiceError {
    pub fn new(kind: ErrorKind, code: &str, message: impl Into<String>) -> Self {
        ServiceError {
            kind,
            code: code.into(),
            message: message.into(),
            field: None,
        }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    pub fn invalid(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Invalid, code, message)
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Conflict, code, message)
    }

    pub fn internal(code: &str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Internal, code, message)
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(ErrorKind::NotFound, "not_found", format!("no campaign {id:?}"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error body serializes")
    }
}

impl fmt::Display for ServiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ServiceError {}

impl From<geosample_core::Error> for ServiceError {
    fn from(e: geosample_core::Error) -> Self {
        use geosample_core::Error as E;
        let kind = match &e {
            E::Factorization(_) | E::Divergence(_) | E::Calibration(_) | E::Io { .. } => ErrorKind::Internal,
            E::AtIteration { source, .. } if matches!(**source, E::Factorization(_) | E::Divergence(_)) => {
                ErrorKind::Internal
            }
            _ => ErrorKind::Invalid,
        };
        ServiceError {
            kind,
            code: e.code().into(),
            message: e.to_string(),
            field: e.field().map(str::to_string),
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::internal("io", e.to_string())
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        ServiceError::internal("json", e.to_string())
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;
