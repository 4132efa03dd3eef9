use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("moment I_{index} of the {spectrum} spectrum diverges")]
    DivergentMoment { spectrum: &'static str, index: f64 },

    #[error("quadrature for I_{index} did not reach tolerance (estimate {value:e}, error {error:e})")]
    NonConvergedQuadrature { index: f64, value: f64, error: f64 },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid transport parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported transport parameters: {0}")]
    UnsupportedParams(String),

    #[error("operator D_n is undefined for n = {0}")]
    DegenerateIndex(i64),

    #[error("initial spectrum violates the temperature normalization: I4/(4 I3) = {ratio}")]
    NormalizationViolated { ratio: f64 },

    #[error("cannot isolate theta^({order})(0): {reason}")]
    NonlinearSolveImpossible { order: usize, reason: String },

    #[error("zero pivot A[{0},0] in continued fraction construction")]
    ZeroPivot(usize),

    #[error("continued fraction denominator vanishes at y = {y}")]
    PoleHit { y: f64 },

    #[error("truncation level {requested} exceeds available level {available}")]
    TruncationTooLarge { requested: usize, available: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("temperature function is not positive at y = {y} (value {value})")]
    NonPositiveTemperature { y: f64, value: f64 },

    #[error("negative density {min:e} at y = {y} exceeds clip tolerance")]
    PositivityViolation { y: f64, min: f64 },

    #[error("step size underflow at y = {y} (dt = {dt:e})")]
    StepSizeUnderflow { y: f64, dt: f64 },

    #[error("no snapshot stored at y = {y}")]
    SnapshotMissing { y: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
