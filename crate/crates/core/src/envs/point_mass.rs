use serde::{Deserialize, Serialize};

use super::ActionBox;
use crate::rng::Rng;

/// Proportional gain of the scripted controller.
pub const EXPERT_GAIN: f64 = 5.0;

/// Planar point mass driven by velocity commands toward a goal.
///
/// `s' = clip(s + dt * clip(a))`, `r(s, a) = -|s - goal| - 0.01 |a|^2` with
/// the reward taken at the pre-step state. Episodes end by truncation at
/// `horizon`, which is never a terminal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMassEnv {
    pub goal: [f64; 2],
    pub dt: f64,
    pub horizon: usize,
    /// Fixed start instead of the uniform initial distribution.
    #[serde(default)]
    pub start: Option<[f64; 2]>,
}

impl Default for PointMassEnv {
    fn default() -> Self {
        PointMassEnv {
            goal: [0.5, 0.5],
            dt: 0.1,
            horizon: 50,
            start: None,
        }
    }
}

impl PointMassEnv {
    pub fn action_box(&self) -> ActionBox {
        ActionBox::symmetric(2, 1.0)
    }

    pub fn reset(&self, rng: &mut Rng) -> Vec<f64> {
        match self.start {
            Some(s) => s.to_vec(),
            None => ActionBox::symmetric(2, 1.0).sample_uniform(rng),
        }
    }

    pub fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        let dist = state
            .iter()
            .zip(&self.goal)
            .map(|(s, g)| (s - g).powi(2))
            .sum::<f64>()
            .sqrt();
        let effort: f64 = action.iter().map(|a| a * a).sum();
        -dist - 0.01 * effort
    }

    /// One deterministic transition; the action is clipped to the box first.
    pub fn transition(&self, state: &[f64], action: &[f64]) -> (Vec<f64>, f64) {
        let a = self.action_box().clip(action);
        let next = state
            .iter()
            .zip(&a)
            .map(|(s, a)| (s + a * self.dt).clamp(-1.0, 1.0))
            .collect();
        (next, self.reward(state, &a))
    }

    /// Noise-free scripted controller `clip(K (goal - s))`.
    pub fn expert_action(&self, state: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(&self.goal)
            .map(|(s, g)| (EXPERT_GAIN * (g - s)).clamp(-1.0, 1.0))
            .collect()
    }
}
