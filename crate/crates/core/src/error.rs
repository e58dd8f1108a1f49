//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A document failed to parse (bad JSON, missing field, wrong type).
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    /// A loaded value violates a model invariant. `field` names the culprit.
    #[error("invalid {field}: {detail}")]
    Invalid { field: String, detail: String },

    /// Vector/matrix sizes do not line up.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    /// Integration produced a non-finite quantity.
    #[error("simulation blow-up: {quantity} became non-finite")]
    Blowup { quantity: String },

    /// An actuation model produced an unusable torque.
    #[error("actuation error in {source_name}: {detail}")]
    Actuation { source_name: String, detail: String },

    /// A run configuration is inconsistent.
    #[error("config error at {field}: {detail}")]
    Config { field: String, detail: String },

    /// An optimizer update was rejected (non-finite gradient, bad shapes).
    #[error("update rejected: {0}")]
    UpdateRejected(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub fn config(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            detail: detail.into(),
        }
    }

    pub fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            got,
        }
    }

    /// True for errors that indicate bad user input rather than a runtime
    /// failure (CLI exit code 2 vs 1).
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Invalid { .. } | Error::Config { .. }
        )
    }
}
