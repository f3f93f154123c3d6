//! Experiment runner: configuration, CSV ingestion, synthetic teacher data,
//! the three model families, parameter accounting and metrics.

pub mod config;
pub mod data;
pub mod models;
pub mod run;
pub mod synth;

use std::path::PathBuf;

use thiserror::Error;

use crate::graphs::GraphError;
use crate::gtn::GtnError;
use crate::tensor::TensorError;
use crate::train::TrainError;
use crate::tt::TtError;

pub use config::{DataSource, ExperimentConfig, Family, ModelConfig, Readout, Sizes, Task};
pub use data::{load_adjacency_csv, load_data_tensor, load_matrix_csv, write_data_tensor, write_matrix_csv};
pub use models::{analytic_param_count, build_model, count_params, default_sweep};
pub use run::{grad_check, render_table, run_experiment, MetricsReport};
pub use synth::{synth_generate, write_synthetic, GraphFamily, SynthSample, SyntheticData, SyntheticSpec};

#[derive(Error, Debug)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}: {message}")]
    Csv { path: PathBuf, row: usize, message: String },

    #[error("{path}: cannot parse {value:?} as a number at ({row},{col})")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        value: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("inconsistent sizes: {0}")]
    InconsistentSizes(String),

    #[error(transparent)]
    Train(#[from] TrainError),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Gtn(#[from] GtnError),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Tt(#[from] TtError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
