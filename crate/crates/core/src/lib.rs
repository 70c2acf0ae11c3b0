//! Scalar-free reverse-mode automatic differentiation over dense f64 tensors.
//!
//! Every operation builds an eager compute graph; calling [`Tensor::backward`]
//! on a scalar result walks that graph once in reverse topological order and
//! accumulates gradients into every tensor created with `requires_grad`.
//! Graphs are single-threaded by construction (`Rc` interior), which keeps the
//! implementation small and the numerics deterministic.

mod graph;
mod tensor;

pub mod gradcheck;
pub mod init;
pub mod ops;
pub mod optim;

pub use graph::ComputeGraph;
pub use tensor::Tensor;
