//! Minimal reverse-mode differentiable tensor engine.
//!
//! Supplies every operation the models and losses need, including the
//! gradient reversal layer used for adversarial objectives. All math is
//! 64-bit; a graph and its tensors are confined to one worker and carry
//! no global state.

mod graph;
pub mod gradcheck;
mod tensor;

pub use graph::{DiffError, Gradients, Graph, NodeId};
pub use tensor::Tensor;
