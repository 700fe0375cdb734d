use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ActionBox, Env, OfflineDataset};
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Random,
    Mediocre,
    Expert,
    /// The bandit's own behavior distribution `N(b(s), sigma_b^2)`.
    Behavior,
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "random" => Ok(PolicyKind::Random),
            "mediocre" => Ok(PolicyKind::Mediocre),
            "expert" => Ok(PolicyKind::Expert),
            "behavior" => Ok(PolicyKind::Behavior),
            other => Err(Error::Config(format!("unknown policy kind {other:?}"))),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Random => "random",
            PolicyKind::Mediocre => "mediocre",
            PolicyKind::Expert => "expert",
            PolicyKind::Behavior => "behavior",
        })
    }
}

/// Fractions of trajectories produced by each scripted policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<(PolicyKind, f64)>,
    pub expert_noise: f64,
    pub mediocre_noise: f64,
}

impl MixtureSpec {
    pub fn new(components: Vec<(PolicyKind, f64)>) -> Self {
        MixtureSpec {
            components,
            expert_noise: 0.1,
            mediocre_noise: 0.5,
        }
    }

    pub fn pure(kind: PolicyKind) -> Self {
        MixtureSpec::new(vec![(kind, 1.0)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::contract("mixture has no components"));
        }
        if self.components.iter().any(|(_, f)| !f.is_finite() || *f < 0.0) {
            return Err(Error::contract("mixture fractions must be finite and nonnegative"));
        }
        let total: f64 = self.components.iter().map(|(_, f)| f).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("mixture fractions sum to {total}, not 1")));
        }
        if !(self.expert_noise >= 0.0 && self.mediocre_noise >= 0.0) {
            return Err(Error::contract("policy noise must be nonnegative"));
        }
        Ok(())
    }

    /// Trajectory counts per component by largest remainder, so they sum to `n`.
    pub fn allocate(&self, n: usize) -> Vec<usize> {
        let exact: Vec<f64> = self.components.iter().map(|(_, f)| f * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&i, &j| {
            let ri = exact[i] - exact[i].floor();
            let rj = exact[j] - exact[j].floor();
            rj.total_cmp(&ri).then(i.cmp(&j))
        });
        let assigned: usize = counts.iter().sum();
        for &i in order.iter().take(n.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        counts
    }
}

/// Parses `kind:fraction` pairs separated by commas, e.g.
/// `expert:0.3,mediocre:0.4,random:0.3`.
impl FromStr for MixtureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut components = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let (kind, frac) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("mixture entry {part:?} lacks ':'")))?;
            let frac: f64 = frac
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad mixture fraction {frac:?}")))?;
            components.push((kind.parse()?, frac));
        }
        Ok(MixtureSpec::new(components))
    }
}

impl fmt::Display for MixtureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, frac)) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}:{frac}")?;
        }
        Ok(())
    }
}

fn noisy(target: Vec<f64>, std: f64, bounds: &ActionBox, rng: &mut Rng) -> Vec<f64> {
    let a = match Normal::new(0.0, std) {
        Ok(n) if std > 0.0 => target.iter().map(|t| t + n.sample(rng)).collect(),
        _ => target,
    };
    bounds.clip(&a)
}

/// Action of one scripted behavior policy.
pub fn scripted_action(env: &Env, kind: PolicyKind, mix: &MixtureSpec, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    let bounds = env.action_box();
    let expert = |s: &[f64]| match env {
        Env::PointMass(p) => p.expert_action(s),
        Env::Bandit(b) => bounds.clip(&b.optimum(s)),
    };
    Ok(match kind {
        PolicyKind::Random => bounds.sample_uniform(rng),
        PolicyKind::Expert => noisy(expert(state), mix.expert_noise, &bounds, rng),
        PolicyKind::Mediocre => {
            if rng.random_bool(0.5) {
                bounds.sample_uniform(rng)
            } else {
                noisy(expert(state), mix.mediocre_noise, &bounds, rng)
            }
        }
        PolicyKind::Behavior => match env {
            Env::Bandit(b) => b.behavior_action(state, rng),
            Env::PointMass(_) => {
                return Err(Error::contract("the behavior policy kind only exists for the bandit"))
            }
        },
    })
}

/// Roll out `n_trajectories` episodes, split across the mixture in
/// component order. Trajectory `i` draws from its own seeded stream, so the
/// result depends only on the arguments.
pub fn generate_dataset(env: &Env, mix: &MixtureSpec, n_trajectories: usize, seed: u64) -> Result<OfflineDataset> {
    mix.validate()?;
    if n_trajectories == 0 {
        return Err(Error::contract("at least one trajectory is required"));
    }
    let kinds: Vec<PolicyKind> = mix
        .allocate(n_trajectories)
        .into_iter()
        .zip(&mix.components)
        .flat_map(|(count, (kind, _))| std::iter::repeat_n(*kind, count))
        .collect();
    let mut ds = OfflineDataset::empty(env.clone(), mix.clone(), seed);
    for (i, kind) in kinds.into_iter().enumerate() {
        let mut r = rng::indexed_stream(seed, rng::ENV, i as u64);
        let mut state = env.reset(&mut r);
        ds.trajectory_starts.push(ds.len());
        for t in 0..env.horizon() {
            let action = scripted_action(env, kind, mix, &state, &mut r)?;
            let step = env.step(&state, &action, t);
            ds.push(&state, &action, step.reward, &step.next_state, step.terminal);
            state = step.next_state;
            if step.done {
                break;
            }
        }
    }
    Ok(ds)
}
