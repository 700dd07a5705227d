use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid period matrix: {0}")]
    InvalidPeriod(String),
    #[error("base point {s} lies outside the family domain (radius {radius})")]
    OutsideDomain { s: String, radius: f64 },
    #[error("point lies on the diagonal (mod lattice): {0}")]
    SingularPoint(String),
    #[error("tensor type mismatch: {0}")]
    TypeMismatch(String),
    #[error("grid shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("right-hand side has nonzero harmonic part {0:e}; equation is not solvable")]
    NotSolvable(f64),
    #[error("Monge-Ampere solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64, trace: Vec<f64> },
    #[error("Newton step lost positivity of the metric at damping {damping:e}")]
    StepFailure { damping: f64 },
    #[error("requested accuracy not achievable: {0}")]
    Accuracy(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
