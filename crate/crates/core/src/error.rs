use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the model domain (radius {radius})")]
    OutOfDomain { x: f64, y: f64, radius: f64 },

    #[error("invalid space parameters: {0}")]
    InvalidParams(String),

    #[error("operation requires kappa <= 0, got kappa = {0}")]
    UnsupportedSign(f64),

    #[error("mean curvature must be positive, got {0}")]
    NonPositiveH(f64),

    #[error("first fundamental form is degenerate (det = {0:e})")]
    DegenerateMetric(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("graph became vertical during iteration (min |nu| = {min_abs_nu:e})")]
    VerticalBlowup { iterations: usize, min_abs_nu: f64 },

    #[error("solution has not converged")]
    NotConverged,

    #[error("no rotational H-sphere: 4H^2 + kappa = {0} <= 0")]
    NoSphere(f64),

    #[error("cannot solve for the second derivative at r = {0}")]
    SingularStep(f64),

    #[error("eigen-iteration limit of {0} reached")]
    IterationLimit(usize),

    #[error("linear solver failure: {0}")]
    LinearSolve(String),

    #[error("invalid experiment configuration: {0}")]
    ConfigInvalid(String),

    #[error("i/o failure: {0}")]
    IoFailure(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}
