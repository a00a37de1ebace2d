use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("triple junction: level sets phi1 and phi2 both cross element {elem}")]
    TripleJunction { elem: usize },

    #[error("element inversion: det F = {det_f} at element {elem}")]
    ElementInversion { elem: usize, det_f: f64 },

    #[error("displacement queried in void phase at ({x}, {y})")]
    QueryInVoid { x: f64, y: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("load step {step} failed to converge (residual {residual:.3e} after {iters} iterations)")]
    NonConvergence { step: usize, residual: f64, iters: usize },

    #[error("gradient unavailable: {0}")]
    GradientUnavailable(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
