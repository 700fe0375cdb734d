//! Small environments with known optima, offline dataset generation and the
//! dataset file format.

mod action_box;
mod bandit;
mod dataset;
mod evaluate;
mod generate;
mod point_mass;

pub use action_box::ActionBox;
pub use bandit::QuadraticBanditEnv;
pub use dataset::{trajectory_returns, Batch, OfflineDataset, TrajectoryRecord, DATASET_VERSION};
pub use evaluate::{evaluate_policy, ReturnStats};
pub use generate::{generate_dataset, scripted_action, MixtureSpec, PolicyKind};
pub use point_mass::{PointMassEnv, EXPERT_GAIN};

use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Outcome of a single transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Episode over, either by termination or by truncation.
    pub done: bool,
    /// True termination; truncation at the horizon leaves this false.
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Env {
    PointMass(PointMassEnv),
    Bandit(QuadraticBanditEnv),
}

impl Env {
    pub fn name(&self) -> &'static str {
        match self {
            Env::PointMass(_) => "point_mass",
            Env::Bandit(_) => "bandit",
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Env::PointMass(_) => 2,
            Env::Bandit(b) => b.state_dim,
        }
    }

    pub fn act_dim(&self) -> usize {
        match self {
            Env::PointMass(_) => 2,
            Env::Bandit(b) => b.action_dim,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Env::PointMass(p) => p.horizon,
            Env::Bandit(_) => 1,
        }
    }

    pub fn action_box(&self) -> ActionBox {
        match self {
            Env::PointMass(p) => p.action_box(),
            Env::Bandit(b) => b.action_box(),
        }
    }

    pub fn reset(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            Env::PointMass(p) => p.reset(rng),
            Env::Bandit(b) => b.reset(rng),
        }
    }

    /// Advance from `state`, where `t` counts the steps already taken in
    /// this episode. Actions are clipped to the box.
    pub fn step(&self, state: &[f64], action: &[f64], t: usize) -> Step {
        match self {
            Env::PointMass(p) => {
                let (next_state, reward) = p.transition(state, action);
                Step {
                    next_state,
                    reward,
                    done: t + 1 >= p.horizon,
                    terminal: false,
                }
            }
            Env::Bandit(b) => Step {
                next_state: state.to_vec(),
                reward: b.reward(state, action),
                done: true,
                terminal: true,
            },
        }
    }
}
