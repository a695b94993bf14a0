//! Configuration, sweeps and output files.

pub mod config;
pub mod output;
pub mod sweep;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, PValue};
pub use output::{emit_outputs, read_sweep_json, RunMetadata, SweepDocument, CSV_HEADER};
pub use sweep::{
    level_mesh, limit_problem, problem_spec, run_n_sweep, run_p_sweep, CellSolution, RowKind, Status,
    SweepRow, SweepTable,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("setup: {0}")]
    Setup(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}
