use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("no unique boundary projection: {0}")]
    NoUniqueProjection(String),

    #[error("invalid boundary data: {0}")]
    InvalidBoundary(String),

    #[error("invalid coefficient field: {0}")]
    InvalidCoefficients(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("start point {0:?} lies outside the closed domain")]
    StartOutside(Vec<f64>),

    #[error("non-finite state at step {step} of path {path}")]
    NonFiniteState { path: usize, step: usize },

    #[error("{count} of {total} paths did not exit before t_max")]
    Unexited { count: usize, total: usize },

    #[error("unexited fraction {fraction:.3e} exceeds threshold {threshold:.3e}")]
    UnexitedFraction { fraction: f64, threshold: f64 },

    #[error("exit time is zero for {0} paths (start on the boundary)")]
    ZeroExitTime(usize),

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("value {value} outside the range of the transform")]
    OutOfRange { value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-diagonal diffusion is not supported by the finite-difference solver; use the Monte Carlo path")]
    NonDiagonalDiffusion,

    #[error("Newton iteration stalled after {iterations} iterations (residual history {history:?})")]
    NewtonStalled { iterations: usize, history: Vec<f64> },

    #[error("ladder monotonicity violated at node {node}: level {level} value {lower} exceeds next level value {upper}")]
    LadderNotMonotone {
        node: usize,
        level: f64,
        lower: f64,
        upper: f64,
    },

    #[error("unknown check: {0}")]
    UnknownCheck(String),

    #[error("unknown suite: {0}")]
    UnknownSuite(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
