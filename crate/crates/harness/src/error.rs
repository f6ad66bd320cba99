use std::path::PathBuf;

use thiserror::Error;

/// Failures of a harness command, each mapped to its own process exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config key `{key}`: {reason}")]
    Schema { key: String, reason: String },

    #[error("{}: {reason}", path.display())]
    Io { path: PathBuf, reason: String },

    #[error("{0}")]
    EnumerationCap(mnpo_core::Error),

    #[error("invalid instance {}: {reason}", path.display())]
    InvalidInstance { path: PathBuf, reason: String },

    #[error("{0}")]
    Core(mnpo_core::Error),
}

impl HarnessError {
    pub fn schema(key: impl Into<String>, reason: impl Into<String>) -> Self {
        HarnessError::Schema {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        HarnessError::Io {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Schema { .. } => 2,
            HarnessError::Io { .. } => 3,
            HarnessError::EnumerationCap(_) => 4,
            HarnessError::InvalidInstance { .. } => 5,
            HarnessError::Core(_) => 1,
        }
    }
}

impl From<mnpo_core::Error> for HarnessError {
    fn from(e: mnpo_core::Error) -> Self {
        match e {
            mnpo_core::Error::EnumerationCap { .. } => HarnessError::EnumerationCap(e),
            other => HarnessError::Core(other),
        }
    }
}

pub type HarnessResult<T> = Result<T, HarnessError>;
