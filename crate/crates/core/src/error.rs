use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(
        "non-finite value at t = {time} (step {step}); last finite mass {last_mass:e}, sup norm {last_sup:e}"
    )]
    NonFinite {
        time: f64,
        step: u64,
        last_mass: f64,
        last_sup: f64,
    },

    #[error("mass drift {drift:e} exceeds tolerance {tolerance:e} at t = {time}")]
    MassDrift {
        time: f64,
        drift: f64,
        tolerance: f64,
    },

    #[error("boundary mass fraction {fraction:e} exceeds tolerance {tolerance:e} at t = {time}; enlarge the box")]
    BoundaryBreach {
        time: f64,
        fraction: f64,
        tolerance: f64,
    },

    #[error("velocity window leaves the box: |v| t = {extent} > {limit}")]
    WindowOutsideBox { extent: f64, limit: f64 },

    #[error("time range mismatch: {0}")]
    TimeRange(String),

    #[error("insufficient data for fit: {0}")]
    InsufficientSpan(String),

    #[error("non-positive sample y = {y:e} at t = {t}")]
    NonPositiveSample { t: f64, y: f64 },

    #[error("window [{t_lo}, {t_hi}] has {count} samples, need at least {required}")]
    SparseWindow {
        t_lo: f64,
        t_hi: f64,
        count: usize,
        required: usize,
    },

    #[error("forcing transcription guard tripped at t = {time}: analytic vs finite-difference relative gap {gap:e}")]
    ForcingGuard { time: f64, gap: f64 },

    #[error("X-norm blow-up on window T = {window}: value {value:e}")]
    NormBlowUp { window: f64, value: f64 },

    #[error("missing input for claim {claim}: {what}")]
    MissingClaimInput { claim: String, what: String },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("missing artifacts in {dir}: {missing:?}")]
    MissingArtifacts { dir: PathBuf, missing: Vec<String> },

    #[error("config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::InvalidConfig(_)
            | Error::ConfigParse { .. } => 2,
            Error::MissingArtifacts { .. } | Error::MissingClaimInput { .. } => 4,
            Error::Checkpoint { .. } | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 4,
            _ => 3,
        }
    }
}
