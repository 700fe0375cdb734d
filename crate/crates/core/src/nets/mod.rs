//! Network parameterizations and parameter bookkeeping.

mod archive;
mod mlp;
mod picnn;
mod policy;
mod target;

pub use archive::TensorArchive;
pub use mlp::{mlp_forward, BoundMlp, Linear, MlpParams};
pub use picnn::{
    picnn_action_gradient, picnn_forward, project_nonneg, Activation, BoundPicnn, PicnnParams,
};
pub use policy::{gaussian_log_prob, BoundPolicy, GaussianPolicyParams, LOG_STD_MAX, LOG_STD_MIN};
pub use target::TargetNetwork;

use crate::diffcore::{Graph, Tensor, Var};
use crate::rng::Rng;
use rand::Rng as _;

/// Ordered, named collection of parameter tensors.
pub trait Parameters {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
    fn tensor_names(&self) -> Vec<String>;

    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        self.tensor_names().into_iter().zip(self.tensors()).collect()
    }
}

/// Record every tensor as a leaf; differentiable when `trainable`.
pub(crate) fn bind_all(g: &mut Graph, tensors: Vec<&Tensor>, trainable: bool) -> Vec<Var> {
    tensors
        .into_iter()
        .map(|t| {
            if trainable {
                g.variable(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect()
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrix.
pub(crate) fn fan_in_uniform(rng: &mut Rng, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("dims")
}
