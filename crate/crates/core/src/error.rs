use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("potential rejected: {0}")]
    InvalidPotential(String),

    #[error("state is not normalized: mass = {mass:.3e}")]
    NotNormalized { mass: f64 },

    #[error("boundary-decay violation at t = {time}: edge amplitude {amplitude:.3e} exceeds {tolerance:.1e}")]
    BoundaryDecay { time: f64, amplitude: f64, tolerance: f64 },

    #[error("non-finite values detected at t = {time}")]
    NonFinite { time: f64 },

    #[error("resolution rule violated: {0}")]
    Resolution(String),

    #[error("{fraction:.2}% of particles stalled at nodes (limit {limit:.1}%)")]
    TooManyStalled { fraction: f64, limit: f64 },

    #[error("caustic reached: WKB state at t = {time} is past the first fold")]
    Caustic { time: f64 },

    #[error("Wigner p-grid cannot resolve the state: {0}")]
    WignerUnresolved(String),

    #[error("Husimi smoothing clipped mass {clipped:.3e} (limit {limit:.1e})")]
    HusimiClipping { clipped: f64, limit: f64 },

    #[error("empty measure")]
    EmptyMeasure,

    #[error("no closed-form limit for {0}")]
    NoLimit(String),

    #[error("test function outside the supported dictionary: {0}")]
    UnsupportedTestFunction(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
