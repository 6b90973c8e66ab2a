use thiserror::Error;

/// Errors raised by the numerical kernels and solvers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("singular input: triangular pivot {pivot:e} at index {index}")]
    SingularInput { index: usize, pivot: f64 },

    #[error("decomposition failed: {0}")]
    DecompositionFailure(String),

    #[error("determinant {det} is not 1 (tolerance {tol:e})")]
    DeterminantError { det: f64, tol: f64 },

    #[error("trace {trace:e} is not zero (tolerance {tol:e})")]
    TraceError { trace: f64, tol: f64 },

    #[error("index error: {0}")]
    IndexError(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    AsymmetricInput { asymmetry: f64 },

    #[error("vector entries increase at position {index} by {rise:e}")]
    UnsortedInput { index: usize, rise: f64 },

    #[error("malformed permutation: {0}")]
    MalformedPermutation(String),

    #[error("invalid base system: {0}")]
    InvalidBase(String),

    #[error("weight {weight:?} is not admissible for flag type {theta:?}")]
    WeightNotAdmissible { weight: Vec<f64>, theta: Vec<usize> },

    #[error("section solver did not converge after {max_iter} sweeps (last residual {last_residual:e})")]
    NoConvergence {
        max_iter: usize,
        last_residual: f64,
        history: Vec<f64>,
    },

    #[error("flag type mismatch: {0}")]
    TypeMismatch(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("matrix is not symplectic (defect {defect:e})")]
    NotSymplectic { defect: f64 },

    #[error("sampler exhausted after {attempts} rejections")]
    SamplerExhausted { attempts: usize },

    #[error("prediction violated at point {point}, root {root}: {detail}")]
    PredictionViolated {
        point: usize,
        root: usize,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
