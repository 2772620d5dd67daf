use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("points lie on the cut locus (distance {distance} >= injectivity radius {limit})")]
    CutLocus { distance: f64, limit: f64 },

    #[error("spectral truncation too small at t = {t}: tail {tail:e} exceeds {tol:e}, need bandwidth >= {required}")]
    Truncation {
        t: f64,
        tail: f64,
        tol: f64,
        required: usize,
    },

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("covariance diverges on the diagonal for alpha = {alpha} <= d/2 = {half_dim}")]
    DivergentDiagonal { alpha: f64, half_dim: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("series did not converge: {0}")]
    NonConvergence(String),

    #[error("numerical blowup at step {step}")]
    Blowup { step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
