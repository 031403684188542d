//! Reverse-mode automatic differentiation over dense arrays.

mod graph;
pub mod kernels;
mod tensor;

pub use graph::{Gradients, Graph, NodeId, ScanArgs, Unary, EXP_CLAMP};
pub use kernels::Padding;
pub use tensor::Tensor;
