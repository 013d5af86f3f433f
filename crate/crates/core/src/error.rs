use std::path::PathBuf;

/// Errors raised by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two matrices or vectors that must agree in shape did not.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A constellation larger than the 16-PAM modulation cap was requested.
    #[error("constellation with {0} levels exceeds the 16-PAM cap")]
    ModulationCap(usize),

    /// A quantizer or transition-matrix description was internally inconsistent.
    #[error("invalid quantizer: {0}")]
    Quantizer(String),

    /// The adaptive receiver was driven past the end of its schedule.
    #[error("schedule index {index} out of range (block length {len})")]
    Schedule { index: usize, len: usize },

    /// Waterfilling or ADC allocation had nothing to allocate to.
    #[error("allocation error: {0}")]
    Allocation(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

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

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
