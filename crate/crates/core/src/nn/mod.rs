//! Minimal reverse-mode autodiff used by the codec networks.

pub mod conv;
pub mod graph;
pub mod optim;
pub mod params;
pub mod tensor;

pub use conv::ConvSpec;
pub use graph::{CustomOp, Gradients, Graph, Var};
pub use optim::Adam;
pub use params::{GradBuffer, ParamId, ParamStore};
pub use tensor::Tensor;
