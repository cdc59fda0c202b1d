use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (condition estimate {condition:.3e})")]
    NotPositiveDefinite { condition: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("{solver} did not converge after {iterations} iterations (max KKT violation {max_kkt_violation:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        max_kkt_violation: f64,
    },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors raised by an iterative or numerical solver rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::NotConverged { .. } | Error::Eigen(_) | Error::NonFinite(_)
        )
    }
}
