//! Command-line harness around the `proxcmo` library: runs the experiments,
//! writes trajectory CSVs plus a JSON summary, and tabulates summaries.

pub mod config;
pub mod report;
pub mod run;
pub mod summary;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Experiment(#[from] proxcmo::experiments::ExperimentError),
}

impl CliError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        1
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// Exit code of a completed run: 2 when any integration failed.
pub fn run_exit_code(summary: &summary::RunSummary) -> i32 {
    if summary.integrator_failures > 0 {
        2
    } else {
        0
    }
}
