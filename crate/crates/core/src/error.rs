use thiserror::Error;

/// Errors produced by the numerical stack.
///
/// `InvalidInput` and `Format` describe problems with caller-supplied data
/// (precondition violations, malformed files); the remaining variants are
/// runtime computation failures. The CLI maps the former to exit code 2 and
/// the latter to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("training diverged (loss became non-finite) at step {step}")]
    Divergence { step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error is attributable to caller input rather than the
    /// computation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::Format(_) | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
