use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ActionBox;
use crate::rng::Rng;

/// One-step contextual bandit with reward `-|a - mu*(s)|^2`.
///
/// Both the optimum `mu*` and the behavior mean `b` are affine in the
/// context, coordinate-wise: `mu*_j(s) = mu_gain * s_{j mod k} + mu_bias`.
/// Behavior actions are `N(b(s), behavior_std^2)` clipped to the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticBanditEnv {
    pub state_dim: usize,
    pub action_dim: usize,
    pub mu_gain: f64,
    pub mu_bias: f64,
    pub behavior_gain: f64,
    pub behavior_bias: f64,
    pub behavior_std: f64,
}

impl Default for QuadraticBanditEnv {
    fn default() -> Self {
        QuadraticBanditEnv {
            state_dim: 1,
            action_dim: 1,
            mu_gain: 0.0,
            mu_bias: 0.0,
            behavior_gain: 0.0,
            behavior_bias: 0.4,
            behavior_std: 0.2,
        }
    }
}

impl QuadraticBanditEnv {
    pub fn action_box(&self) -> ActionBox {
        ActionBox::symmetric(self.action_dim, 1.0)
    }

    pub fn reset(&self, rng: &mut Rng) -> Vec<f64> {
        ActionBox::symmetric(self.state_dim, 1.0).sample_uniform(rng)
    }

    fn affine(&self, state: &[f64], gain: f64, bias: f64) -> Vec<f64> {
        (0..self.action_dim)
            .map(|j| gain * state[j % self.state_dim] + bias)
            .collect()
    }

    pub fn optimum(&self, state: &[f64]) -> Vec<f64> {
        self.affine(state, self.mu_gain, self.mu_bias)
    }

    pub fn behavior_mean(&self, state: &[f64]) -> Vec<f64> {
        self.affine(state, self.behavior_gain, self.behavior_bias)
    }

    pub fn behavior_action(&self, state: &[f64], rng: &mut Rng) -> Vec<f64> {
        let mean = self.behavior_mean(state);
        let a: Vec<f64> = match Normal::new(0.0, self.behavior_std) {
            Ok(n) => mean.iter().map(|m| m + n.sample(rng)).collect(),
            Err(_) => mean,
        };
        self.action_box().clip(&a)
    }

    pub fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        let a = self.action_box().clip(action);
        let mu = self.optimum(state);
        -a.iter().zip(&mu).map(|(a, m)| (a - m).powi(2)).sum::<f64>()
    }
}
