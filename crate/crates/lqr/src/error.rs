use thiserror::Error;

/// Errors produced by the solvers, estimators, and simulators in this crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is not symmetric: max asymmetry {asymmetry:.3e} exceeds tolerance")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite (lambda_min = {lambda_min:.3e})")]
    NotPositiveDefinite { lambda_min: f64 },

    #[error("closed-loop matrix is not stable (spectral radius = {spectral_radius:.6})")]
    Unstable { spectral_radius: f64 },

    #[error("state diverged at step {step} (norm = {norm:.3e})")]
    Divergence { step: usize, norm: f64 },

    #[error("Riccati iteration did not converge within {iterations} iterations; (A, B) may not be stabilizable")]
    NonStabilizable { iterations: usize },

    #[error("matrix block is singular or badly conditioned: {0}")]
    Conditioning(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("regressors are rank deficient; the model is not identifiable from this data")]
    Identifiability,

    #[error("exploration variance is zero; the gradient estimator is undefined")]
    DegenerateExploration,

    #[error("the {} finite-difference perturbation destabilized the plant at step {step}", if *positive { "positive" } else { "negative" })]
    PerturbationDivergence { positive: bool, step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
