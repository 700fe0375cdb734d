use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{ActionBox, Env, MixtureSpec};
use crate::diffcore::Tensor;
use crate::rng::Rng;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"QDOT";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 8;

/// Transitions from a fixed behavior policy, stored in single precision.
#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub observations: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub next_observations: Vec<f32>,
    pub terminals: Vec<bool>,
    pub trajectory_starts: Vec<usize>,
    pub action_box: ActionBox,
    pub env: Env,
    pub mixture: MixtureSpec,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    env: Env,
    seed: u64,
    mixture: MixtureSpec,
    action_box: ActionBox,
}

/// Mini-batch in training precision. `not_done` is `1 - terminal`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub observations: Tensor,
    pub actions: Tensor,
    pub rewards: Tensor,
    pub next_observations: Tensor,
    pub not_done: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub start: usize,
    pub length: usize,
    pub cumulative_reward: f64,
}

fn widen(xs: &[f32]) -> Vec<f64> {
    xs.iter().map(|&x| f64::from(x)).collect()
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        reason: reason.into(),
    }
}

impl OfflineDataset {
    pub fn empty(env: Env, mixture: MixtureSpec, seed: u64) -> Self {
        OfflineDataset {
            obs_dim: env.obs_dim(),
            act_dim: env.act_dim(),
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_observations: Vec::new(),
            terminals: Vec::new(),
            trajectory_starts: Vec::new(),
            action_box: env.action_box(),
            env,
            mixture,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64], terminal: bool) {
        self.observations.extend(obs.iter().map(|&x| x as f32));
        self.actions.extend(action.iter().map(|&x| x as f32));
        self.rewards.push(reward as f32);
        self.next_observations.extend(next_obs.iter().map(|&x| x as f32));
        self.terminals.push(terminal);
    }

    pub fn observation(&self, i: usize) -> Vec<f64> {
        widen(&self.observations[i * self.obs_dim..(i + 1) * self.obs_dim])
    }

    pub fn action(&self, i: usize) -> Vec<f64> {
        widen(&self.actions[i * self.act_dim..(i + 1) * self.act_dim])
    }

    pub fn next_observation(&self, i: usize) -> Vec<f64> {
        widen(&self.next_observations[i * self.obs_dim..(i + 1) * self.obs_dim])
    }

    /// One past the last index of trajectory `k`.
    pub fn trajectory_end(&self, k: usize) -> usize {
        self.trajectory_starts.get(k + 1).copied().unwrap_or(self.len())
    }

    pub fn num_trajectories(&self) -> usize {
        self.trajectory_starts.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            (self.observations.len(), n * self.obs_dim, "observations"),
            (self.actions.len(), n * self.act_dim, "actions"),
            (self.next_observations.len(), n * self.obs_dim, "next observations"),
            (self.terminals.len(), n, "terminals"),
        ];
        for (got, want, what) in lens {
            if got != want {
                return Err(Error::contract(format!("{what}: {got} values, expected {want}")));
            }
        }
        if self.action_box.dim() != self.act_dim {
            return Err(Error::contract("action box dimension differs from action width"));
        }
        let starts = &self.trajectory_starts;
        if n > 0 && starts.first() != Some(&0) {
            return Err(Error::contract("first trajectory must start at index 0"));
        }
        if starts.windows(2).any(|w| w[0] >= w[1]) || starts.last().is_some_and(|&s| s >= n) {
            return Err(Error::contract("trajectory starts must be strictly increasing and in range"));
        }
        for k in 0..starts.len() {
            let end = self.trajectory_end(k);
            if self.terminals[starts[k]..end - 1].iter().any(|&t| t) {
                return Err(Error::contract(format!("terminal inside trajectory {k}")));
            }
        }
        Ok(())
    }

    fn gather(&self, indices: &[usize]) -> Batch {
        let n = indices.len();
        let (k, d) = (self.obs_dim, self.act_dim);
        let pick = |src: &[f32], w: usize| -> Tensor {
            let data = indices
                .iter()
                .flat_map(|&i| src[i * w..(i + 1) * w].iter().map(|&x| f64::from(x)))
                .collect();
            Tensor::matrix(n, w, data).expect("gathered length matches shape")
        };
        Batch {
            observations: pick(&self.observations, k),
            actions: pick(&self.actions, d),
            rewards: pick(&self.rewards, 1),
            next_observations: pick(&self.next_observations, k),
            not_done: Tensor::matrix(n, 1, indices.iter().map(|&i| if self.terminals[i] { 0.0 } else { 1.0 }).collect())
                .expect("one flag per index"),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::contract(format!("index {bad} out of range for {} transitions", self.len())));
        }
        Ok(self.gather(indices))
    }

    /// Uniform sample with replacement.
    pub fn sample_batch(&self, rng: &mut Rng, size: usize) -> Result<Batch> {
        if self.is_empty() || size == 0 {
            return Err(Error::contract("cannot sample from an empty dataset or with batch size 0"));
        }
        let idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..self.len())).collect();
        Ok(self.gather(&idx))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        if self.is_empty() {
            return Err(Error::contract("refusing to save an empty dataset"));
        }
        let meta = serde_json::to_vec(&Metadata {
            env: self.env.clone(),
            seed: self.seed,
            mixture: self.mixture.clone(),
            action_box: self.action_box.clone(),
        })
        .map_err(|e| Error::contract(format!("metadata serialization: {e}")))?;
        let n = self.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * (n * (2 * self.obs_dim + self.act_dim + 1)) + n + 8 * self.num_trajectories() + 4 + meta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.obs_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.act_dim as u32).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.num_trajectories() as u64).to_le_bytes());
        for arr in [&self.observations, &self.actions, &self.rewards, &self.next_observations] {
            for x in arr.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend(self.terminals.iter().map(|&t| u8::from(t)));
        for &s in &self.trajectory_starts {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(format_err(0, "bad magic, expected QDOT"));
        }
        let version = r.u32("version")?;
        if version != DATASET_VERSION {
            return Err(format_err(4, format!("unsupported version {version}")));
        }
        let obs_dim = r.u32("obs dim")? as usize;
        let act_dim = r.u32("act dim")? as usize;
        let n = r.u64("transition count")?;
        let n_traj = r.u64("trajectory count")?;
        if obs_dim == 0 || act_dim == 0 {
            return Err(format_err(8, "zero observation or action width"));
        }
        if n == 0 {
            return Err(format_err(16, "dataset has no transitions"));
        }
        // Bound every count by the bytes actually present before allocating.
        let remaining = (bytes.len() - r.pos) as u64;
        if n > remaining || n_traj > remaining {
            return Err(format_err(bytes.len(), "counts exceed file size"));
        }
        let n = n as usize;
        let observations = r.f32s(n * obs_dim, "observations")?;
        let actions = r.f32s(n * act_dim, "actions")?;
        let rewards = r.f32s(n, "rewards")?;
        let next_observations = r.f32s(n * obs_dim, "next observations")?;
        let term_at = r.pos;
        let terminals = r
            .take(n, "terminals")?
            .iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(format_err(term_at + i, format!("terminal byte {b}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        let mut trajectory_starts = Vec::with_capacity(n_traj as usize);
        for _ in 0..n_traj {
            trajectory_starts.push(r.u64("trajectory start")? as usize);
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta_at = r.pos;
        let meta: Metadata = serde_json::from_slice(r.take(meta_len, "metadata")?)
            .map_err(|e| format_err(meta_at, format!("metadata: {e}")))?;
        if r.pos != bytes.len() {
            return Err(format_err(r.pos, "trailing bytes"));
        }
        let ds = OfflineDataset {
            obs_dim,
            act_dim,
            observations,
            actions,
            rewards,
            next_observations,
            terminals,
            trajectory_starts,
            action_box: meta.action_box,
            env: meta.env,
            mixture: meta.mixture,
            seed: meta.seed,
        };
        ds.validate().map_err(|e| format_err(HEADER_LEN, e.to_string()))?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        OfflineDataset::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err(self.bytes.len(), format!("truncated while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let len = count
            .checked_mul(4)
            .ok_or_else(|| format_err(self.pos, format!("{what} size overflows")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Undiscounted reward sum of every trajectory.
pub fn trajectory_returns(ds: &OfflineDataset) -> Vec<TrajectoryRecord> {
    (0..ds.num_trajectories())
        .map(|k| {
            let start = ds.trajectory_starts[k];
            let end = ds.trajectory_end(k);
            TrajectoryRecord {
                start,
                length: end - start,
                cumulative_reward: ds.rewards[start..end].iter().map(|&r| f64::from(r)).sum(),
            }
        })
        .collect()
}
