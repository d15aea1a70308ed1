use thiserror::Error;

pub type Result<T> = std::result::Result<T, DfoError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DfoError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// The black box returned a non-finite value.
    #[error("evaluation failed at {point:?}: value {value}")]
    EvaluationFailure { point: Vec<f64>, value: f64 },
    #[error("evaluation protocol violated: {0}")]
    Protocol(String),
    /// The multiplicative operator was selected at a point where `f + h = 0`.
    #[error("degenerate encryption at iteration {k}: f + h = 0")]
    DegenerateEncryption { k: u64 },
    #[error("degenerate interpolation geometry: {0}")]
    DegenerateGeometry(String),
    #[error("update denominator too small: |sigma| = {sigma:e}")]
    NearSingularUpdate { sigma: f64 },
    #[error("lagrange function is numerically flat on the trust region")]
    DegenerateLagrange,
    /// No step produced an update denominator above the floor; the
    /// interpolation set has to be rebuilt.
    #[error("no step with a usable update denominator; geometry rebuild required")]
    GeometryRebuild,
    #[error("unsupported: {0}")]
    Unsupported(String),
}
