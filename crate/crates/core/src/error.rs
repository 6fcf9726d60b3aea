use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} did not converge (achieved {achieved:.3e}, requested {requested:.3e})")]
    Quadrature {
        what: &'static str,
        achieved: f64,
        requested: f64,
    },

    #[error("calibration failed: {what} residual {residual:.3e} exceeds {tolerance:.3e}")]
    Calibration {
        what: &'static str,
        residual: f64,
        tolerance: f64,
    },

    /// `v = w` passed to a kernel that is singular on the diagonal.
    #[error("kernel evaluated on its diagonal singularity")]
    Singular,

    #[error("time step too large: per-step collision probability {probability:.3} >= 0.5")]
    TimeStep { probability: f64 },

    #[error("no steady state by t = {t_end}: drift (m1 {drift_m1:.3e}, m2 {drift_m2:.3e}) above tolerance (m1 {tol_m1:.3e}, m2 {tol_m2:.3e})")]
    NotConverged {
        t_end: f64,
        drift_m1: f64,
        drift_m2: f64,
        tol_m1: f64,
        tol_m2: f64,
    },

    #[error("snapshot header does not match configuration: {}", .0.join("; "))]
    SnapshotMismatch(Vec<String>),

    #[error("malformed snapshot {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
