use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("Gram matrix DDᵀ is numerically singular: pivot {index} is {pivot:e}, threshold {threshold:e}")]
    RankDeficient { index: usize, pivot: f64, threshold: f64 },

    /// Loss or gradient became non-finite. Carries the iterate at which it happened.
    #[error("numerical failure after {iterations} iterations: {message}")]
    NumericalFailure {
        message: String,
        iterations: usize,
        iterate: Vec<f64>,
    },

    #[error("endpoints do not bracket a root: f({a}) = {fa:e}, f({b}) = {fb:e}")]
    Bracketing { a: f64, b: f64, fa: f64, fb: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("unsupported loss model: {0}")]
    UnsupportedModel(String),

    #[error("Newton iteration stalled: |ψ′(τ)| = {slope:e} at τ = {tau}")]
    Stall { tau: f64, slope: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
