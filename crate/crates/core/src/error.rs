use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the inference library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("unknown quantity label `{0}`")]
    UnknownLabel(String),
    #[error("kinematic source `{label}` is inconsistent with the prior: {detail}")]
    Consistency { label: String, detail: String },
    #[error("commutative pooling is not valid: {0}")]
    PoolingValidity(String),
    #[error("invalid prior specification: {0}")]
    Spec(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numerical accuracy not reached: {0}")]
    Accuracy(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// True for errors caused by the caller's data or configuration rather
    /// than by a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Dimension { .. } | Error::UnknownLabel(_) | Error::Input(_) | Error::Spec(_)
        )
    }
}
