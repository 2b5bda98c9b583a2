use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("unsupported order {order}: supported range is {min}..={max}")]
    UnsupportedOrder { order: i32, min: i32, max: i32 },

    /// Dyadic refinement did not settle. `last` and `prev` hold the final two
    /// per-interval iterates, flattened interval-major.
    #[error("germ did not converge by level {level}: successive difference {diff:e} exceeds tolerance {tol:e}")]
    NonConvergentGerm {
        level: u32,
        diff: f64,
        tol: f64,
        last: Vec<f64>,
        prev: Vec<f64>,
    },

    #[error("fit undetermined: {0}")]
    FitUndetermined(String),

    #[error("exponent pair (rho={rho}, kappa={kappa}) is not admissible in dimension {d}")]
    InvalidExponentPair { rho: f64, kappa: f64, d: usize },

    #[error("stability constraint violated on driver segment {segment}: dt={dt:e} exceeds limit {limit:e}")]
    StabilityViolation { segment: usize, dt: f64, limit: f64 },

    #[error("solution diverged at step {step} (t={time})")]
    Divergence { step: usize, time: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
