//! Error type shared across the solver suite.

use alloc::string::String;

/// Errors raised by construction, simulation and quadrature routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument left the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation was called in a state it does not support.
    #[error("usage error: {0}")]
    Usage(String),

    /// Kernel or model construction data violate the standing assumptions.
    #[error("invalid construction: {0}")]
    Invalid(String),

    /// A quadrature failed to meet its accuracy target; carries the best
    /// available estimate.
    #[error("accuracy target missed in {what}: best {best}, error estimate {err_est}, tolerance {tol}")]
    Accuracy {
        what: String,
        best: f64,
        err_est: f64,
        tol: f64,
    },

    /// A path simulation exceeded its step cap before first passage.
    #[error(
        "runaway path: {steps} steps (cap {cap}) reached level {reached} of target {target} at step size {step_h}"
    )]
    Runaway {
        steps: u64,
        cap: u64,
        reached: f64,
        target: f64,
        step_h: f64,
    },

    /// A grid did not cover the support required by a pairing integral.
    #[error("insufficient grid coverage: {0}")]
    Coverage(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
