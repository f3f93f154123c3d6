//! GTN layers, the classical architectures as special cases, and the
//! equivalence suite that checks them against each other.

pub mod classical;
pub mod equiv;
pub mod layer;

use thiserror::Error;

use crate::graphs::GraphError;
use crate::tensor::TensorError;
use crate::tt::TtError;

pub use classical::{
    attention_as_gtn, attention_forward, cnn_as_gtn, cnn_forward, dense_layer, dnn_as_gtn, dnn_forward,
    gcn_as_gtn, gcn_forward, rnn_closed_form, rnn_unrolled, tt_dense_layer, unnormalized_gcn,
};
pub use equiv::{run_equivalence_suite, EquivalenceReport, SuiteSize};
pub use layer::{gtn_forward, gtn_tucker, ActivationKind, DataTensorMeta, GtnLayerSpec};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GtnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("kernel of length {kernel} needs more than {size} samples")]
    KernelTooLong { size: usize, kernel: usize },

    #[error("W1 is not idempotent: max |W1·W1 − W1| = {0:e}")]
    NotIdempotent(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Tt(#[from] TtError),
}

pub type Result<T> = std::result::Result<T, GtnError>;
