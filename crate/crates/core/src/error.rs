use thiserror::Error;

/// Errors surfaced by chart evaluation, transport, sampling and analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} is outside the chart domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {min_eig:.3e})")]
    MetricDegenerate { point: Vec<f64>, min_eig: f64 },

    #[error("integration step too large: speed drift {drift:.3e} exceeds {limit:.3e}")]
    StepTooLarge { drift: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frame matrix is singular (|det| = {det:.3e})")]
    SingularFrame { det: f64 },

    #[error("linear part is singular and cannot be inverted")]
    SingularLinearPart,

    #[error("curve does not close: endpoint gap {gap:.3e} exceeds {limit:.3e}")]
    NonClosedCurve { gap: f64, limit: f64 },

    #[error("sample contains no holonomy elements")]
    EmptySample,

    #[error("linear part is not orthogonal (deviation {deviation:.3e} exceeds {limit:.3e})")]
    NonOrthogonalLinearPart { deviation: f64, limit: f64 },

    #[error("no fixed point available: {residual:.3e} exceeds {limit:.3e}; cone certification needs a candidate apex")]
    NoFixedPoint { residual: f64, limit: f64 },

    #[error("splitting is tolerance-ambiguous: invariance residual {residual:.3e} falls in the undecidable band around {tol:.3e}")]
    ToleranceAmbiguity { residual: f64, tol: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    ConvergenceFailure {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
