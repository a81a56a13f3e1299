//! Minimal reverse-mode differentiation over dense `f64` tensors.

mod activation;
mod graph;
mod mlp;
mod tensor;

pub use activation::{gelu, gelu_lipschitz, gelu_prime, gelu_second, sigmoid, Activation};
pub use graph::{log_sigmoid, Gradients, Graph, Node, NodeId};
pub use mlp::{input_gradient_graph, mlp_forward, mlp_forward_traced, BoundLayer, BoundMlp, Readout};
pub use tensor::Tensor;

/// eps inside the square root of every norm in the penalty path.
pub const NORM_EPS: f64 = 1e-12;
