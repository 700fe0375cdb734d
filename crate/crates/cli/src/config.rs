//! `key = value` run configuration shared by every subcommand.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use qdot_core::envs::{Env, PointMassEnv, QuadraticBanditEnv};
use qdot_core::qdot::{TrainingConfig, CONFIG_KEYS};

use crate::CliError;

/// Keys understood besides the training keys.
const RUN_KEYS: &[&str] = &[
    "env",
    "dataset",
    "out",
    "out_dir",
    "checkpoint",
    "mix",
    "trajectories",
    "expert_noise",
    "mediocre_noise",
    "episodes",
    "alphas",
    "seeds",
    "goal_x",
    "goal_y",
    "dt",
    "horizon",
    "state_dim",
    "action_dim",
    "mu_gain",
    "mu_bias",
    "behavior_gain",
    "behavior_bias",
    "behavior_std",
];

fn is_known(key: &str) -> bool {
    CONFIG_KEYS.contains(&key) || RUN_KEYS.contains(&key)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Lines of `key = value`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        if !is_known(key) {
            return Err(CliError::usage(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Apply a `KEY=VALUE` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) -> Result<(), CliError> {
        match value {
            Some(v) => self.set(key, &v.to_string()),
            None => Ok(()),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::usage(format!("missing required setting {key} (--{})", key.replace('_', "-"))))
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| CliError::usage(format!("{key}: cannot parse {v:?}"))),
            None => Ok(default),
        }
    }

    pub fn training_config(&self) -> Result<TrainingConfig, CliError> {
        let mut tc = TrainingConfig::default();
        for key in CONFIG_KEYS {
            if let Some(v) = self.get(key) {
                tc.set(key, v)?;
            }
        }
        tc.validate()?;
        Ok(tc)
    }

    pub fn env(&self) -> Result<Env, CliError> {
        match self.require("env")? {
            "point-mass" | "point_mass" => {
                let d = PointMassEnv::default();
                Ok(Env::PointMass(PointMassEnv {
                    goal: [self.parse_or("goal_x", d.goal[0])?, self.parse_or("goal_y", d.goal[1])?],
                    dt: self.parse_or("dt", d.dt)?,
                    horizon: self.parse_or("horizon", d.horizon)?,
                    start: None,
                }))
            }
            "bandit" => {
                let d = QuadraticBanditEnv::default();
                let env = QuadraticBanditEnv {
                    state_dim: self.parse_or("state_dim", d.state_dim)?,
                    action_dim: self.parse_or("action_dim", d.action_dim)?,
                    mu_gain: self.parse_or("mu_gain", d.mu_gain)?,
                    mu_bias: self.parse_or("mu_bias", d.mu_bias)?,
                    behavior_gain: self.parse_or("behavior_gain", d.behavior_gain)?,
                    behavior_bias: self.parse_or("behavior_bias", d.behavior_bias)?,
                    behavior_std: self.parse_or("behavior_std", d.behavior_std)?,
                };
                if env.state_dim == 0 || env.action_dim == 0 || env.behavior_std < 0.0 {
                    return Err(CliError::usage("bandit dimensions must be positive and behavior_std >= 0"));
                }
                Ok(Env::Bandit(env))
            }
            other => Err(CliError::usage(format!("unknown env {other:?} (point-mass, bandit)"))),
        }
    }

    /// Same settings with every training key spelled out.
    pub fn resolved(&self, training: &TrainingConfig) -> RunConfig {
        let mut out = self.clone();
        for (k, v) in training.entries() {
            out.values.insert(k.to_string(), v);
        }
        out
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
