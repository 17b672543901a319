//! Experiment harness for `pipebo-core`: configurable run matrices, trace
//! files and the summary tables computed from them.

pub mod config;
pub mod error;
pub mod external;
pub mod matrix;
pub mod report;

pub use config::{ExperimentConfig, Preset, ResolvedConfig};
pub use error::{HarnessError, Result};
