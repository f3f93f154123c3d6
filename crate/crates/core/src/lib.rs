//! Graph tensor networks.
//!
//! A GTN layer is a Tucker product over a multi-domain data tensor: one graph
//! shift operator per domain mode, one weight matrix per feature mode. The
//! crate provides the dense tensor algebra underneath, tensor-train (MPO)
//! weights, graph shift operator constructors, reference forward passes for
//! the classical architectures that fall out as special cases, manual
//! reverse-mode gradients with an Adam optimizer, and a config-driven
//! experiment harness.

pub mod graphs;
pub mod gtn;
pub mod harness;
pub mod par;
pub mod tensor;
pub mod train;
pub mod tt;

pub use tensor::{DenseTensor, ModeIndex, Shape, TensorError};
