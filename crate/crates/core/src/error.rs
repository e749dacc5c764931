use thiserror::Error;

/// Errors raised by the group substrate, the Lagrangian calculus and the steppers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rotation angle {angle} is too close to pi for the principal logarithm")]
    NearBranchCut { angle: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("Lagrangian is not invariant under the isotropy subgroup (deviation {deviation:e})")]
    NotInvariant { deviation: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("advected quantity left its orbit (norm drift {drift:e})")]
    OrbitDrift { drift: f64 },

    #[error("Legendre transformation is not invertible")]
    LegendreNotInvertible,

    #[error("phase point does not match bracket kind {0}")]
    PhaseMismatch(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
