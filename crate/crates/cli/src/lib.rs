//! Orchestration of the snapshot, decomposition, control and report steps.
//! Each step reads what the previous one wrote into the output directory.

pub mod commands;
pub mod config;
pub mod report;

pub use config::PipelineConfig;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cpsdre_core::Error),
}

impl CliError {
    /// 2 for configuration and file problems, 1 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// JSON keys holding wall-clock measurements; everything else in the output
/// directory is reproducible byte for byte.
pub const TIMING_FIELDS: &[&str] = &["wall_ms", "cpu_ms", "cpu_ratio", "care_ms_mean", "care_ratio"];
