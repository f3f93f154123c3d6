//! Manual reverse-mode training: parameters, model graph, losses, gradient
//! checks and the Adam optimizer.

pub mod fdcheck;
pub mod fit;
pub mod init;
pub mod loss;
pub mod model;
pub mod optim;
pub mod params;

use thiserror::Error;

use crate::graphs::GraphError;
use crate::gtn::GtnError;
use crate::tensor::TensorError;
use crate::tt::TtError;

pub use fdcheck::{fd_check, fd_compare, FdReport};
pub use fit::{fit, FitOutcome, TrainConfig};
pub use loss::{loss, LossKind};
pub use model::{batch_loss, batch_loss_and_grad, DomainInit, DomainOp, Layer, ModelBuilder, ModelSpec, Sample, Trace};
pub use optim::{optimizer_step, OptimizerState};
pub use params::{Gradients, ParameterSet};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum TrainError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("trace does not belong to this model: {0}")]
    MissingCache(String),

    #[error("binary cross-entropy needs predictions in [0, 1], got {value} at index {index}")]
    BceDomain { index: usize, value: f64 },

    #[error("non-finite gradient for parameter `{0}`, step rejected")]
    NonFiniteGradient(String),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("invalid setting: {0}")]
    InvalidSetting(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Tt(#[from] TtError),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Gtn(#[from] GtnError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[cfg(test)]
mod tests;
