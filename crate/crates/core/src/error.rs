use thiserror::Error;

/// Errors raised by the field operators, solvers and I/O layer.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("compatibility violated: max |v(x,1)| = {residual:.3e} exceeds {tolerance:.1e}")]
    CompatibilityViolation { residual: f64, tolerance: f64 },

    #[error("analytic band exhausted at t = {t}: remaining width {remaining:.3e}")]
    BandExhausted { t: f64, remaining: f64 },

    #[error("weighted amplitude {value:.3e} exceeds threshold {threshold:.3e}")]
    Overflow { value: f64, threshold: f64 },

    #[error("blowup detected at t = {t}: {reason}")]
    BlowupDetected { t: f64, reason: String },

    #[error("singular per-mode factorization (mode {mode}, pivot {pivot:.3e})")]
    SolverSingular { mode: usize, pivot: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt payload for field `{field}`: expected {expected} bytes, found {found}")]
    CorruptPayload {
        field: String,
        expected: usize,
        found: usize,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
