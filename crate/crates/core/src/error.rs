use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = WalError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum WalError {
    /// Bad configuration or argument. The first field names the offending key.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("{path}: line {line}: {field}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        reason: String,
    },

    #[error("non-finite loss for pair {pair_id} at epoch {epoch}, batch {batch}")]
    NonFinite {
        pair_id: String,
        epoch: usize,
        batch: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl WalError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        WalError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        WalError::DimensionMismatch {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        WalError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            WalError::NonFinite { .. } => 2,
            _ => 1,
        }
    }
}
