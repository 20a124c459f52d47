//! Experiment harness: TOML configs, seeded runs with per-seed CSV
//! histories, quartile summaries and SVG charts.

pub mod aggregate;
pub mod config;
pub mod plot;
pub mod run;

use std::path::PathBuf;

pub use aggregate::{aggregate, quartiles, MethodSummary, Summary};
pub use config::{EnvironmentConfig, ExperimentConfig};
pub use run::{read_history, run, HistoryRow, Manifest, RunOutput, OUTPUT_ROOT_ENV};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fpo_core::FpoError),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{0}: {1}")]
    Csv(PathBuf, #[source] csv::Error),
    #[error("{0}: {1}")]
    Json(PathBuf, #[source] serde_json::Error),
    #[error("malformed history {0}: {1}")]
    History(PathBuf, String),
    #[error("nothing to aggregate: {0}")]
    Empty(String),
    #[error("plotting failed: {0}")]
    Plot(String),
}
