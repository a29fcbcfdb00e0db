use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown identifier '{name}' at position {position}")]
    UnknownIdentifier { name: String, position: usize },
    #[error("evaluation failed: {0}")]
    Eval(String),
    #[error("evaluation at declared singularity {z}")]
    Singular { z: Complex64 },
    #[error("invalid branchpoints: {0}")]
    Branchpoints(String),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("point {z} lies on a contour or cut")]
    OnContour { z: Complex64 },
    #[error("quadrature did not reach tolerance after {evaluations} evaluations (error estimate {estimate:e})")]
    Quadrature { evaluations: usize, estimate: f64 },
    #[error("ill-conditioned moment system (condition number {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("placement: {0}")]
    Placement(String),
    #[error("newton did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}
