use std::path::PathBuf;

/// Errors produced anywhere in the roomprint pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("signal too short: {0}")]
    SignalTooShort(String),

    #[error("insufficient frames: got {got}, need at least {need}")]
    InsufficientFrames { got: usize, need: usize },

    #[error("insufficient training data: {frames} frames for {mixtures} mixtures (need {need})")]
    InsufficientTrainingData {
        frames: usize,
        mixtures: usize,
        need: usize,
    },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("no bands in range [{f_min} Hz, {f_max} Hz]")]
    NoBandsInRange { f_min: f64, f_max: f64 },

    #[error("band unresolvable: [{f_l:.3} Hz, {f_u:.3} Hz] at {bin_hz:.4} Hz per bin")]
    BandUnresolvable { f_l: f64, f_u: f64, bin_hz: f64 },

    #[error("zero energy")]
    ZeroEnergy,

    #[error("insufficient decay range: curve reaches {reached_db:.2} dB, need {required_db:.2} dB")]
    InsufficientDecayRange { reached_db: f64, required_db: f64 },

    #[error("insufficient class support: class {class:?} has {count} distinct samples, need {need}")]
    InsufficientClassSupport {
        class: String,
        count: usize,
        need: usize,
    },

    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("manifest invalid: {0}")]
    ManifestInvalid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown strategy {name:?} (available: {available})")]
    UnknownStrategy { name: String, available: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than an internal failure.
    pub fn is_invalid_input(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
