use std::io;
use std::path::PathBuf;

use pipebo_core::engine::EngineError;
use pipebo_core::metrics::MetricsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("malformed trace file {path}: {message}")]
    Trace { path: PathBuf, message: String },
    #[error("{function} / {preset} / {strategy} run {run}: {source}")]
    Run {
        function: String,
        preset: String,
        strategy: String,
        run: usize,
        #[source]
        source: Box<EngineError>,
    },
    #[error("traces have no runs for strategy `{0}`")]
    MissingStrategy(String),
    #[error("preset mismatch: {0}")]
    PresetMismatch(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
