use thiserror::Error;

/// Errors raised by the physics and numerics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A constructor or operation received a parameter outside its allowed range.
    #[error("invalid parameter `{field}`: {constraint}")]
    InvalidParam {
        field: &'static str,
        constraint: String,
    },

    /// An operation was asked to work outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The third-order field equations are no longer trustworthy.
    #[error("outside validity domain: {0}")]
    ValidityDomain(String),

    /// The forward pump collapsed to zero and the field equations are singular.
    #[error("singular field state at z = {z:.6e} m: |Ef| = {ef_abs:.3e} rad/s")]
    SingularState { z: f64, ef_abs: f64 },

    /// Phase matching cannot be solved for the two-photon detuning.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Adaptive integration failed (step underflow or step budget).
    #[error("integration failed at z = {z:.6e}: {reason}")]
    Integration { z: f64, reason: String },

    /// A stochastic sample or transfer matrix produced NaN/inf.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, constraint: impl Into<String>) -> Error {
    Error::InvalidParam {
        field,
        constraint: constraint.into(),
    }
}
