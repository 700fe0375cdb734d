//! Differentiable computation core.
//!
//! A [`Graph`] is a tape built fresh for each forward pass. Adjoint rules are
//! themselves recorded as graph operations, so a gradient is an ordinary
//! subgraph that can be differentiated again (needed when a loss depends on
//! `grad_a psi` and is optimized over the parameters of `psi`).

mod adam;
mod backward;
mod graph;
mod tensor;

pub use adam::{adam_step, Adam, AdamState, DEFAULT_LEARNING_RATE};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
