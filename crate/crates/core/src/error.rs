use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("Laplacian at k = {k} is not invertible on data with nonzero mean")]
    NonInvertible { k: f64 },

    #[error("wavenumber |k| = {k} must exceed 1")]
    WavenumberTooSmall { k: f64 },

    #[error("singular symbol of the shifted Laplacian at n = {n} (k = {k}, s = {s})")]
    SingularSymbol { n: i64, k: f64, s: f64 },

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("{name} = {value} outside admissible range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("fit window rejected: {0}")]
    InvalidWindow(String),

    #[error("sample at t = {t} is not positive ({value})")]
    NonPositiveSample { t: f64, value: f64 },

    #[error("linear system is near singular (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("oscillatory integrand unresolved: need at least {required} quadrature cells, got {given}")]
    UnresolvedPhase { required: usize, given: usize },

    #[error("invalid shear profile: {0}")]
    InvalidProfile(String),

    #[error("Morse transform failed: {0}")]
    Morse(String),

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("assembled form is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("time differencing dominated by noise; try dt <= {recommended_dt:e}")]
    DifferencingNoise { recommended_dt: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
