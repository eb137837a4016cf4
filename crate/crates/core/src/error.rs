use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("functions live on different grids")]
    GridMismatch,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("exponent overflow: alpha*s^2 = {exponent:.3} exceeds guard {guard}")]
    Range { exponent: f64, guard: f64 },

    #[error("series for G did not reach the requested precision after {terms} terms")]
    Precision { terms: usize },

    #[error("dilation factor {factor} outside the allowed range [{min}, {max}]")]
    DilationOutOfRange { factor: f64, min: f64, max: f64 },

    #[error("dilation would move a fraction {0:e} of the mass outside the grid")]
    Truncated(f64),

    #[error("fiber constraint has no sign change on [{s_min:e}, {s_max:e}]")]
    NoSignChange { s_min: f64, s_max: f64 },

    #[error("nonlinear numerator of r(u) is not positive ({0:e})")]
    NonpositiveNumerator(f64),

    #[error("root polishing did not reach tolerance (residual {residual:e})")]
    RootNotConverged { residual: f64 },

    #[error("the zero function is excluded here")]
    ZeroFunction,

    #[error("no convergence after {iters} iterations (stationarity {stationarity:e})")]
    MaxIters { iters: usize, stationarity: f64 },

    #[error("energy increased over {0} consecutive accepted steps")]
    Diverged(usize),

    #[error("line search stalled at stationarity {0:e}")]
    LineSearchStalled(f64),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
