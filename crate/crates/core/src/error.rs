use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value encountered ({context})")]
    NonFiniteValue { context: String },

    #[error("degenerate weight: normalizer {normalizer:e} below 1e-300")]
    DegenerateWeight { normalizer: f64 },

    /// An eigenvalue of `I + K` fell at or below the floor.
    #[error("singular jacobian: eigenvalue {eigenvalue:e} at or below floor {floor:e}")]
    SingularJacobian { eigenvalue: f64, floor: f64 },

    #[error("operator field is {rows}x{cols}, expected {dim}x{dim}")]
    NonSquare { rows: usize, cols: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("density is not integrable: {0}")]
    NonIntegrableDensity(String),

    #[error("inner minimization failed to converge at {failed} of {total} points")]
    NonConvergent { failed: usize, total: usize },

    #[error("solver stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn non_finite(context: impl Into<String>) -> Error {
    Error::NonFiniteValue {
        context: context.into(),
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
