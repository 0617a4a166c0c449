use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("body is unbounded in direction {direction:?}")]
    Unbounded { direction: Vec<f64> },

    #[error("body is degenerate (no interior): {0}")]
    Flat(String),

    #[error("point {point:?} lies outside the body")]
    OutsideBody { point: Vec<f64> },

    #[error(
        "normalization failed: inner radius {inner:.6} / outer radius {outer:.6} \
         outside tolerance {tolerance}"
    )]
    NormalizationFailed { inner: f64, outer: f64, tolerance: f64 },

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error(
        "points too close to be resolved at degree {degree}: rho = {rho:.3e}, \
         minimum usable degree is {min_degree}"
    )]
    Separation { rho: f64, degree: usize, min_degree: usize },

    #[error("chebyshev argument {value} left [-1, 1]")]
    RangeViolation { value: f64 },

    #[error("degree budget exceeded: structural degree {achieved} > {budget}")]
    BudgetExceeded { achieved: u64, budget: u64 },

    #[error("candidate pool is empty")]
    EmptyPool,

    #[error(
        "pool too sparse: covering certificate {covering:.4e} exceeds twice the \
         target {epsilon:.4e}; increase the pool size"
    )]
    MeshQuality { covering: f64, epsilon: f64 },

    #[error("body fingerprint mismatch: mesh {mesh}, body {body}")]
    FingerprintMismatch { mesh: String, body: String },

    #[error("ball volume estimate is zero at h = {h}; radius too small for the sample density")]
    EmptyBall { h: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
