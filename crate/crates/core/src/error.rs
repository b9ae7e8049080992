use thiserror::Error;

/// Errors raised by the numerical toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("empty ball: radius {radius} too small for spacing {spacing}")]
    EmptyBall { radius: f64, spacing: f64 },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bisection did not converge within {0} iterations")]
    BisectionFailed(usize),
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("zero mode present and not projected out (overlap {0:e})")]
    ZeroMode(f64),
    #[error("orthogonal pair: pairing {0:e} vanishes")]
    OrthogonalPair(f64),
    #[error("{0}: no admissible ball")]
    NoAdmissibleBall(&'static str),
    #[error("request on boundary layer at index {0}")]
    BoundaryLayer(usize),
    #[error("estimate {id}: {reason}")]
    Estimate { id: String, reason: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

