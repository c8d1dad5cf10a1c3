use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("cutoff {cutoff} too small, need at least {required}")]
    CutoffTooSmall { required: usize, cutoff: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vectorized dimension {dim} exceeds the configured limit {limit}")]
    DimensionOverflow { dim: usize, limit: usize },
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("steady state is not unique: null space has dimension {dimension}")]
    DegenerateNullSpace { dimension: usize },
    #[error("time step underflow at t = {t:.3e}")]
    StepUnderflow { t: f64 },
    #[error("state is not a valid density matrix: {0}")]
    InvalidState(String),
    #[error("linear algebra failure: {0}")]
    Numerical(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
