use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not in SL(2,R): determinant {det}")]
    InvalidMatrix { det: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("lift continuation failed on [{lo}, {hi}] after exhausting bisection depth")]
    ContinuityFailure { lo: f64, hi: f64 },

    #[error("orbit produced a non-finite value at step {step}")]
    NumericOverflow { step: u64 },

    #[error("fiber map is not monotone in E: witness omega={omega}, y={y}, E={e}")]
    MonotonicityViolation { omega: f64, y: f64, e: f64 },

    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("cocycle lifts must be calibrated before computing the dynamical IDS")]
    CalibrationRequired,

    #[error("IDS anchor calibration failed: |IDS(E_ref)| = {residual}")]
    CalibrationFailure { residual: f64 },

    #[error("insufficient signal: only {usable} pairs pass the noise filter")]
    InsufficientSignal { usable: usize },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
