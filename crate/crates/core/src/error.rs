use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {key}: {reason}")]
    InvalidInput { key: &'static str, reason: String },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("SVD did not converge on a {rows}x{cols} matrix")]
    SvdNonConvergence { rows: usize, cols: usize },

    #[error("iteration limit of {0} reached")]
    MaxIterations(usize),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(key: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidInput {
        key,
        reason: reason.into(),
    }
}

impl Error {
    /// Name of the offending parameter for input errors.
    pub fn key(&self) -> Option<&'static str> {
        match self {
            Error::InvalidInput { key, .. } => Some(key),
            _ => None,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Factorization(_) | Error::SvdNonConvergence { .. }
        )
    }
}
