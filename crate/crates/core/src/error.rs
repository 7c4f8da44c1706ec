use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time order violated: s = {s} > t = {t}")]
    TimeOrder { s: usize, t: usize },

    #[error("time {0} is not on the grid")]
    OffGrid(f64),

    #[error("degenerate bridge: P(x = {x} -> z = {z}) vanishes from grid step {step}")]
    DegenerateBridge { x: usize, z: usize, step: usize },

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("infinite divergence: first argument has mass where the second has none")]
    InfiniteDivergence,

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("state space of size {size} exceeds cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("operation requires uniform priors")]
    NonUniformPrior,

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("training diverged at step {step}: loss increased for {window} consecutive steps")]
    TrainingDiverged { step: usize, window: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
