use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffcore::DEFAULT_LEARNING_RATE;
use crate::nets::Activation;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Qdot,
    Bc,
    Iql,
    Advw,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qdot" => Ok(Algorithm::Qdot),
            "bc" => Ok(Algorithm::Bc),
            "iql" => Ok(Algorithm::Iql),
            "advw" => Ok(Algorithm::Advw),
            other => Err(Error::Config(format!("unknown algorithm {other:?} (qdot, bc, iql, advw)"))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Qdot => "qdot",
            Algorithm::Bc => "bc",
            Algorithm::Iql => "iql",
            Algorithm::Advw => "advw",
        })
    }
}

/// Analytic critic that replaces the learned Q and V. With one in place the
/// value updates and the target update are skipped and `V` is taken as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FrozenCritic {
    /// `Q == 0`.
    Zero,
    /// `Q(s, a) = -|a - mu(s)|^2` with `mu_j(s) = gain * s_{j mod k} + bias`.
    Quadratic { gain: f64, bias: f64 },
}

impl FromStr for FrozenCritic {
    type Err = Error;

    /// `zero` or `quadratic:<gain>:<bias>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |x: &str| {
            x.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {x:?} in frozen critic")))
        };
        match parts.as_slice() {
            ["zero"] => Ok(FrozenCritic::Zero),
            ["quadratic", g, b] => Ok(FrozenCritic::Quadratic { gain: num(g)?, bias: num(b)? }),
            _ => Err(Error::Config(format!("frozen critic {s:?}: expected zero or quadratic:<gain>:<bias>"))),
        }
    }
}

impl fmt::Display for FrozenCritic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrozenCritic::Zero => f.write_str("zero"),
            FrozenCritic::Quadratic { gain, bias } => write!(f, "quadratic:{gain}:{bias}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub beta: f64,
    pub expectile_tau: f64,
    pub gamma: f64,
    pub polyak_rate: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub advantage_clip: f64,
    pub seed: u64,
    /// 0 disables periodic evaluation; the final step is always evaluated.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub log_interval: u64,
    pub hidden_units: usize,
    pub activation: Activation,
    pub gp_coef: f64,
    pub frozen_critic: Option<FrozenCritic>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            algorithm: Algorithm::Qdot,
            alpha: 1.0,
            beta: 3.0,
            expectile_tau: 0.7,
            gamma: 0.99,
            polyak_rate: 0.005,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: 256,
            total_steps: 100_000,
            advantage_clip: 100.0,
            seed: 0,
            eval_interval: 5_000,
            eval_episodes: 10,
            log_interval: 100,
            hidden_units: 256,
            activation: Activation::Relu,
            gp_coef: 10.0,
            frozen_critic: None,
        }
    }
}

/// Keys accepted by [`TrainingConfig::set`], in output order.
pub const CONFIG_KEYS: &[&str] = &[
    "algorithm",
    "alpha",
    "beta",
    "expectile_tau",
    "gamma",
    "polyak_rate",
    "learning_rate",
    "batch_size",
    "total_steps",
    "advantage_clip",
    "seed",
    "eval_interval",
    "eval_episodes",
    "log_interval",
    "hidden_units",
    "activation",
    "gp_coef",
    "frozen_critic",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and >= 0");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and >= 0");
        }
        if !(self.expectile_tau > 0.0 && self.expectile_tau < 1.0) {
            return bad("expectile_tau must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.polyak_rate > 0.0 && self.polyak_rate <= 1.0) {
            return bad("polyak_rate must lie in (0, 1]");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.advantage_clip > 0.0) {
            return bad("advantage_clip must be positive");
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be positive");
        }
        if self.log_interval == 0 {
            return bad("log_interval must be positive");
        }
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive");
        }
        if !(self.gp_coef >= 0.0 && self.gp_coef.is_finite()) {
            return bad("gp_coef must be finite and >= 0");
        }
        Ok(())
    }

    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "algorithm" => self.algorithm = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "expectile_tau" => self.expectile_tau = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "polyak_rate" => self.polyak_rate = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "total_steps" => self.total_steps = parse(key, v)?,
            "advantage_clip" => self.advantage_clip = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "eval_interval" => self.eval_interval = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "log_interval" => self.log_interval = parse(key, v)?,
            "hidden_units" => self.hidden_units = parse(key, v)?,
            "activation" => self.activation = parse(key, v)?,
            "gp_coef" => self.gp_coef = parse(key, v)?,
            "frozen_critic" => {
                self.frozen_critic = match v {
                    "" | "none" => None,
                    other => Some(other.parse()?),
                }
            }
            other => return Err(Error::Config(format!("unknown training key {other:?}"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs that [`TrainingConfig::set`] reads back exactly.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        CONFIG_KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "algorithm" => self.algorithm.to_string(),
                    "alpha" => self.alpha.to_string(),
                    "beta" => self.beta.to_string(),
                    "expectile_tau" => self.expectile_tau.to_string(),
                    "gamma" => self.gamma.to_string(),
                    "polyak_rate" => self.polyak_rate.to_string(),
                    "learning_rate" => self.learning_rate.to_string(),
                    "batch_size" => self.batch_size.to_string(),
                    "total_steps" => self.total_steps.to_string(),
                    "advantage_clip" => self.advantage_clip.to_string(),
                    "seed" => self.seed.to_string(),
                    "eval_interval" => self.eval_interval.to_string(),
                    "eval_episodes" => self.eval_episodes.to_string(),
                    "log_interval" => self.log_interval.to_string(),
                    "hidden_units" => self.hidden_units.to_string(),
                    "activation" => self.activation.to_string(),
                    "gp_coef" => self.gp_coef.to_string(),
                    "frozen_critic" => self.frozen_critic.map_or("none".into(), |c| c.to_string()),
                    _ => unreachable!("every listed key is handled"),
                };
                (k, v)
            })
            .collect()
    }
}
