//! Offline reinforcement learning with Wasserstein-2 policy regularization.
//!
//! The learned policy is obtained by transporting dataset actions through the
//! action-gradient of a partially input-convex network `psi(s, a)`. Because
//! `psi` is convex in the action, `grad_a psi` is an optimal transport map and
//! `E[|a - grad_a psi(s, a)|^2]` is the squared 2-Wasserstein distance between
//! the dataset policy and the transported one, so no discriminator is needed.
//!
//! Modules:
//! - [`diffcore`]: tape-based reverse-mode autodiff with double backprop, Adam.
//! - [`nets`]: MLPs, the partially input-convex potential, Gaussian policy,
//!   target networks and the checkpoint tensor format.
//! - [`transport`]: Brenier-form W2 estimation and exact discrete OT oracles.
//! - [`qdot`]: losses, the training step/loop and the BC / IQL / AdvW baselines.
//! - [`envs`]: toy environments, dataset generation, evaluation and the
//!   binary dataset format.

pub mod diffcore;
pub mod envs;
pub mod error;
pub mod nets;
pub mod qdot;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
