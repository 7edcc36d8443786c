use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("space dimension {product} exceeds cap {cap} (mode dims {mode_dims:?}, {spins} spin(s))")]
    Sizing {
        product: usize,
        cap: usize,
        mode_dims: Vec<usize>,
        spins: usize,
    },

    #[error("occupation {occupation:?} outside truncation {mode_dims:?}")]
    OutOfBounds {
        occupation: Vec<usize>,
        mode_dims: Vec<usize>,
    },

    #[error("state has zero norm: {0}")]
    ZeroVector(String),

    #[error("wrong state representation: {0}")]
    Representation(String),

    #[error("mode {mode} is resonant with the drive (sideband detuning is zero)")]
    Resonance { mode: usize },

    #[error("scheduling failed: {reason}")]
    Scheduling {
        reason: String,
        achievable_ratio: Option<f64>,
    },

    #[error("target {target} does not fit in {bits} bit(s)")]
    Bits { target: usize, bits: usize },

    #[error("numerical floor: {0}")]
    Numerical(String),

    #[error("fit failed: {reason} (best residual norm {best_residual:.3e})")]
    Fit { reason: String, best_residual: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("regression failed: {0}")]
    Regression(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
