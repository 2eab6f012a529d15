//! Harness around `relu-lab-core`: JSON configuration, trajectory and summary
//! files, the reference gradient listing, and randomized verification suites.

pub mod config;
pub mod output;
pub mod repro;
pub mod verify;

use relu_lab_core::LabError;
use thiserror::Error;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "RELU_SGD_LAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Failure(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything that failed while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Failure(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::LyapunovIncrease { .. } | LabError::NormCap { .. } | LabError::NonFiniteGradient { .. } => {
                CliError::Failure(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Worker pool honoring [`THREADS_ENV`]; machine parallelism when unset.
pub fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Failure(format!("cannot start worker pool: {e}")))
}
