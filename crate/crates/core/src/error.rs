use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dilation matrix is not admissible: min eigenvalue of symmetric part is {min_eigenvalue} (< 1)")]
    Admissibility { min_eigenvalue: f64 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("root finder did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("multiplier symbol is not finite at frequency {0:?}")]
    NonFiniteSymbol(Vec<f64>),

    #[error("input has non-zero mean (|f^(0)| = {mean:e}, threshold {threshold:e})")]
    MeanNotZero { mean: f64, threshold: f64 },

    #[error("symbol degenerates on the unit shell (min |m| = {min_modulus:e})")]
    DegenerateSymbol { min_modulus: f64 },

    #[error("smooth approximant too far from symbol: sup|m - l| = {distance:e} >= eps0 = {eps0:e}")]
    ApproximantTooFar { distance: f64, eps0: f64 },

    #[error("profile not normalized: integral of eta^2 dt/t = {integral}")]
    Normalization { integral: f64 },

    #[error("scale quadrature does not cover the integrand: estimated tail fraction {tail:e}")]
    QuadratureCoverage { tail: f64 },

    #[error("weight is singular: {0}")]
    SingularWeight(String),

    #[error("parameter out of range: {0}")]
    Range(String),

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
