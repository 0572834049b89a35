//! Command-line experiment driver: configuration, single runs, sweeps,
//! CSV output, scaling fits and the sector tables.

pub mod config;
pub mod experiment;
pub mod fit;
pub mod output;
pub mod sweep;
pub mod tables;

use thiserror::Error;

use crate::algebra::AlgebraError;
use crate::dynamics::DynamicsError;
use crate::models::ModelError;
use crate::observables::ObservableError;
use crate::redfield::RedfieldError;

pub const ENV_WORKERS: &str = "GAUGENOISE_WORKERS";
pub const ENV_OUTPUT_ROOT: &str = "GAUGENOISE_OUTPUT_ROOT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model setup failed: {0}")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Redfield(#[from] RedfieldError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Model(_) | HarnessError::Fit(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Worker count from the environment, falling back to available parallelism.
pub fn worker_count() -> usize {
    std::env::var(ENV_WORKERS)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Resolves a configured output directory against the output-root override.
pub fn resolve_output_dir(dir: &std::path::Path) -> std::path::PathBuf {
    match std::env::var_os(ENV_OUTPUT_ROOT) {
        Some(root) if dir.is_relative() => std::path::Path::new(&root).join(dir),
        _ => dir.to_path_buf(),
    }
}
