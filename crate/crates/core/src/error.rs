use thiserror::Error;

/// Failures raised by the filtering, design and simulation routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("gain vector must have at least one entry")]
    EmptyGains,

    #[error("projection is undefined for first-order gain vectors")]
    ProjectionUndefined,

    #[error("binomial gains need alpha > 0, got {0}")]
    NonPositiveAlpha(f64),

    #[error("Routh array has a degenerate pivot at row {row}; Hurwitz status is indeterminate")]
    IndeterminateRouth { row: usize },

    #[error("gain vector {index} is not admissible for the {variant} filter: {gains:?}")]
    InadmissibleGains {
        index: usize,
        variant: &'static str,
        gains: Vec<f64>,
    },

    #[error("reference directions are collinear (largest cross-product norm {max_cross:.3e})")]
    CollinearReferences { max_cross: f64 },

    #[error("bias gain must be diagonal with strictly positive entries")]
    NonPositiveBiasGain,

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("weighting matrix Q must be symmetric")]
    AsymmetricWeight,

    #[error("weighting matrix Q must be positive definite")]
    WeightNotPositiveDefinite,

    #[error("Lyapunov equation has no positive definite solution (A not Hurwitz?)")]
    NotHurwitz,

    #[error("vector pair is degenerate ({frame} cross-product norm {cross_norm:.3e})")]
    DegenerateTriad { frame: &'static str, cross_norm: f64 },

    #[error("pitch {pitch_deg:.6} deg is at gimbal lock")]
    GimbalLock { pitch_deg: f64 },

    #[error("time step must be in (0, {max}] s, got {dt}")]
    InvalidTimeStep { dt: f64, max: f64 },

    #[error("state diverged (non-finite) at t = {t} s")]
    Divergence { t: f64 },

    #[error("controller gains must be strictly positive: {0}")]
    InvalidControllerGains(String),

    #[error("W matrix is not positive definite (lambda_min = {lambda_min:.3e})")]
    WNotPositiveDefinite { lambda_min: f64 },

    #[error("eigenvalues of W are (nearly) repeated; eigenvectors are not unique")]
    RepeatedEigenvalues,

    #[error("inertia matrix must be symmetric positive definite")]
    InvalidInertia,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
