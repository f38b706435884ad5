use std::path::PathBuf;

/// Errors produced by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("zero channel gain on subcarrier {0}")]
    ZeroGain(usize),

    #[error("zero-valued training symbol at index {0}")]
    ZeroTrainingSymbol(usize),

    #[error("signal has zero power")]
    ZeroSignal,

    #[error("impulse response carries no power")]
    ZeroGainResponse,

    #[error("estimated channel gain must be positive, got {0}")]
    NonPositiveGain(f64),

    #[error("anchors are collinear; lateration system is singular")]
    SingularLateration,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("threshold {threshold} not between levels {low} and {high}")]
    BadThreshold { threshold: f64, low: f64, high: f64 },

    #[error("config {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    TomlWrite(#[from] toml::ser::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
