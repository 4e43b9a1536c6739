use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-physical Lamé pair (lambda = {lambda}, mu = {mu}): {violated}")]
    InvalidMedium {
        lambda: f64,
        mu: f64,
        violated: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("kernel singularity: |x - y| = {distance:e} is below the cutoff {cutoff:e}")]
    Singularity { distance: f64, cutoff: f64 },

    #[error(
        "wavenumber {kappa} violates the smallness condition max(kappa_s, kappa_p) < 2/diam = {limit}"
    )]
    BoundCondition { kappa: f64, limit: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("ill-conditioned system (condition estimate {condition:e}): {context}")]
    IllConditioned { condition: f64, context: String },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("iterative solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("infeasible distribution: {0}")]
    Infeasible(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("capacitance asymmetry {asymmetry:e} exceeds 10x the quadrature error estimate {estimate:e}")]
    Asymmetric { asymmetry: f64, estimate: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
