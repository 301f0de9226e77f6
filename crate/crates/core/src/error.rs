use alloc::string::String;

/// Errors raised by the estimators, samplers and the training loop.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("need at least {needed} samples, got {actual}")]
    InsufficientSamples { needed: usize, actual: usize },

    #[error("need at least 2 samples with label 1, got {actual}")]
    InsufficientPositives { actual: usize },

    #[error("quantile bin {bin} of {bins} is empty (ties at a quantile boundary)")]
    EmptyBin { bin: usize, bins: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn ensure_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
