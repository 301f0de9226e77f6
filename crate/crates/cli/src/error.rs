use std::path::PathBuf;

/// Failures of a command, split by the exit code they map to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or flag combinations (exit code 2).
    #[error("usage: {0}")]
    Usage(String),

    /// Input file missing or unreadable (exit code 2).
    #[error("cannot read {path}: {message}")]
    MissingInput { path: PathBuf, message: String },

    /// Malformed CSV or JSON content (exit code 1).
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{0}")]
    Core(#[from] frem_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// A self-check did not pass (exit code 1).
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::MissingInput { .. } => 2,
            _ => 1,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
