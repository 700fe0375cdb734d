use std::path::Path;

use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::critic::{BatchVars, Critic};
use super::losses::{
    advw_discriminator_loss, advw_policy_loss, awr_policy_loss, awr_targets, psi_objective, q_loss, v_loss,
};
use super::{Algorithm, FrozenCritic, TrainingConfig};
use crate::diffcore::{Adam, Graph, Tensor};
use crate::envs::{evaluate_policy, ActionBox, Batch, Env, OfflineDataset, ReturnStats};
use crate::nets::{GaussianPolicyParams, MlpParams, Parameters, PicnnParams, TargetNetwork, TensorArchive};
use crate::rng::{self, Rng};
use crate::{Error, Result};

const FORMAT_TAG: &str = "qdot-checkpoint";

/// Losses and diagnostics of one update. Components an algorithm does not
/// train are reported as 0. For `advw`, `psi_objective` carries the
/// discriminator's dual gap (its W1 estimate).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct LossBreakdown {
    pub step: u64,
    pub v_loss: f64,
    pub q_loss: f64,
    pub psi_objective: f64,
    pub pi_loss: f64,
    pub w2_estimate: f64,
    pub mean_advantage: f64,
}

/// Everything a run needs to continue: networks, target, optimizer moments,
/// configuration, step counter and the positions of the training streams.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointBundle {
    pub config: TrainingConfig,
    pub env: Option<Env>,
    pub obs_dim: usize,
    pub action_box: ActionBox,
    pub q: MlpParams,
    pub v: MlpParams,
    pub psi: PicnnParams,
    pub pi: GaussianPolicyParams,
    pub target_q: TargetNetwork<MlpParams>,
    pub disc: MlpParams,
    pub q_opt: Adam,
    pub v_opt: Adam,
    pub psi_opt: Adam,
    pub pi_opt: Adam,
    pub disc_opt: Adam,
    pub step: u64,
    batch_rng: Rng,
    noise_rng: Rng,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format: String,
    step: u64,
    config: TrainingConfig,
    env: Option<Env>,
    obs_dim: usize,
    action_box: ActionBox,
    batch_rng_word_pos: String,
    noise_rng_word_pos: String,
    optimizer_steps: Vec<u64>,
}

const NOISE: &str = "policy-noise";

fn gradient_step<P: Parameters>(params: &mut P, opt: &mut Adam, grads: &[Tensor]) -> Result<()> {
    opt.step(params.tensors_mut(), grads)
}

impl CheckpointBundle {
    pub fn new(config: TrainingConfig, obs_dim: usize, action_box: ActionBox, env: Option<Env>) -> Result<Self> {
        config.validate()?;
        if obs_dim == 0 {
            return Err(Error::contract("observation width must be positive"));
        }
        let (k, d, h) = (obs_dim, action_box.dim(), config.hidden_units);
        let mut r = rng::stream(config.seed, rng::INIT);
        let q = MlpParams::new(&mut r, k + d, h, 1);
        let v = MlpParams::new(&mut r, k, h, 1);
        let psi = PicnnParams::new(&mut r, k, d, h, config.activation);
        let pi = GaussianPolicyParams::new(&mut r, k, h, action_box.clone());
        let disc = MlpParams::new(&mut r, k + d, h, 1);
        let lr = config.learning_rate;
        Ok(CheckpointBundle {
            target_q: TargetNetwork::new(&q, config.polyak_rate)?,
            q_opt: Adam::new(q.tensors(), lr),
            v_opt: Adam::new(v.tensors(), lr),
            psi_opt: Adam::new(psi.tensors(), lr),
            pi_opt: Adam::new(pi.tensors(), lr),
            disc_opt: Adam::new(disc.tensors(), lr),
            batch_rng: rng::stream(config.seed, rng::BATCH),
            noise_rng: rng::stream(config.seed, NOISE),
            q,
            v,
            psi,
            pi,
            disc,
            config,
            env,
            obs_dim,
            action_box,
            step: 0,
        })
    }

    pub fn for_dataset(config: TrainingConfig, dataset: &OfflineDataset) -> Result<Self> {
        CheckpointBundle::new(config, dataset.obs_dim, dataset.action_box.clone(), Some(dataset.env.clone()))
    }

    /// Draw a batch from the run's sampling stream and apply one update.
    pub fn sample_and_step(&mut self, dataset: &OfflineDataset) -> Result<LossBreakdown> {
        let mut next = self.clone();
        let batch = dataset.sample_batch(&mut next.batch_rng, next.config.batch_size)?;
        let out = next.update(&batch).map_err(|e| self.wrap(e))?;
        *self = next;
        Ok(out)
    }

    /// One update on the given batch. Either the whole step is applied or,
    /// on error, nothing is.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let mut next = self.clone();
        let out = next.update(batch).map_err(|e| self.wrap(e))?;
        *self = next;
        Ok(out)
    }

    fn wrap(&self, e: Error) -> Error {
        Error::Training {
            step: self.step + 1,
            source: Box::new(e),
        }
    }

    fn update(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        if batch.observations.cols() != self.obs_dim || batch.actions.cols() != self.action_box.dim() {
            return Err(Error::contract("batch widths do not match the networks"));
        }
        self.step += 1;
        let mut out = match self.config.algorithm {
            Algorithm::Qdot => self.qdot_step(batch)?,
            Algorithm::Bc => self.bc_baseline_step(batch)?,
            Algorithm::Iql => self.iql_baseline_step(batch)?,
            Algorithm::Advw => self.advw_step(batch)?,
        };
        out.step = self.step;
        Ok(out)
    }

    fn frozen(&self) -> Option<FrozenCritic> {
        self.config.frozen_critic
    }

    fn update_v(&mut self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let b = BatchVars::record(&mut g, batch);
        let v = self.v.bind(&mut g, true);
        let loss = v_loss(&mut g, &v, &self.target_q.shadow, &b, self.config.expectile_tau)?;
        let value = g.evaluate(loss)?.item();
        let grads = g.gradient(loss, &v.vars())?;
        gradient_step(&mut self.v, &mut self.v_opt, &grads)?;
        Ok(value)
    }

    fn update_q(&mut self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let b = BatchVars::record(&mut g, batch);
        let q = self.q.bind(&mut g, true);
        let loss = q_loss(&mut g, &q, &self.v, &b, self.config.gamma);
        let value = g.evaluate(loss)?.item();
        let grads = g.gradient(loss, &q.vars())?;
        gradient_step(&mut self.q, &mut self.q_opt, &grads)?;
        Ok(value)
    }

    /// Ascent on the transport objective, then projection back onto the
    /// convex family. Returns the objective and the displacement penalty.
    fn update_psi(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let mut g = Graph::new();
        let b = BatchVars::record(&mut g, batch);
        let psi = self.psi.bind(&mut g, true)?;
        let critic: &dyn Critic = match &self.config.frozen_critic {
            Some(c) => c,
            None => &self.target_q.shadow,
        };
        let terms = psi_objective(&mut g, &psi, critic, &b, self.config.alpha)?;
        let objective = g.evaluate(terms.objective)?.item();
        let penalty = g.evaluate(terms.penalty)?.item();
        let loss = g.neg(terms.objective);
        let grads = g.gradient(loss, &psi.vars())?;
        gradient_step(&mut self.psi, &mut self.psi_opt, &grads)?;
        self.psi.project();
        Ok((objective, penalty))
    }

    fn update_pi(&mut self, batch: &Batch, transport: bool, beta: f64) -> Result<(f64, f64)> {
        let frozen = self.frozen();
        let critic: &dyn Critic = match &frozen {
            Some(c) => c,
            None => &self.q,
        };
        let v = if frozen.is_some() { None } else { Some(&self.v) };
        let psi = transport.then_some(&self.psi);
        let targets = awr_targets(batch, psi, critic, v, &self.action_box, beta, self.config.advantage_clip)?;
        let mut g = Graph::new();
        let pi = self.pi.bind(&mut g, true);
        let s = g.constant(batch.observations.clone());
        let loss = awr_policy_loss(&mut g, &pi, s, &targets);
        let value = g.evaluate(loss)?.item();
        let grads = g.gradient(loss, &pi.vars())?;
        gradient_step(&mut self.pi, &mut self.pi_opt, &grads)?;
        Ok((value, targets.mean_advantage))
    }

    fn update_critics(&mut self, batch: &Batch, out: &mut LossBreakdown) -> Result<()> {
        if self.frozen().is_none() {
            out.v_loss = self.update_v(batch)?;
            out.q_loss = self.update_q(batch)?;
        }
        Ok(())
    }

    fn update_target(&mut self) -> Result<()> {
        if self.frozen().is_none() {
            self.target_q.polyak_update(&self.q)?;
        }
        Ok(())
    }

    /// V, Q, transport map, policy, then the target network.
    fn qdot_step(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let mut out = LossBreakdown::default();
        self.update_critics(batch, &mut out)?;
        let (obj, w2) = self.update_psi(batch)?;
        out.psi_objective = obj;
        out.w2_estimate = w2;
        let (pi_loss, adv) = self.update_pi(batch, true, self.config.beta)?;
        out.pi_loss = pi_loss;
        out.mean_advantage = adv;
        self.update_target()?;
        Ok(out)
    }

    /// Unweighted likelihood of the dataset actions.
    pub fn bc_baseline_step(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let mut g = Graph::new();
        let pi = self.pi.bind(&mut g, true);
        let s = g.constant(batch.observations.clone());
        let targets = awr_targets(batch, None, &FrozenCritic::Zero, None, &self.action_box, 0.0, 1.0)?;
        let loss = awr_policy_loss(&mut g, &pi, s, &targets);
        let value = g.evaluate(loss)?.item();
        let grads = g.gradient(loss, &pi.vars())?;
        gradient_step(&mut self.pi, &mut self.pi_opt, &grads)?;
        Ok(LossBreakdown {
            pi_loss: value,
            ..Default::default()
        })
    }

    /// Expectile V, Bellman Q, and weighted regression on dataset actions.
    pub fn iql_baseline_step(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let mut out = LossBreakdown::default();
        self.update_critics(batch, &mut out)?;
        let (pi_loss, adv) = self.update_pi(batch, false, self.config.beta)?;
        out.pi_loss = pi_loss;
        out.mean_advantage = adv;
        self.update_target()?;
        Ok(out)
    }

    fn standard_normal(&mut self, n: usize, d: usize) -> Result<Tensor> {
        let data = (0..n * d).map(|_| StandardNormal.sample(&mut self.noise_rng)).collect();
        Tensor::matrix(n, d, data)
    }

    /// Expectile V and Bellman Q, one discriminator update, then the
    /// policy against the live Q and the discriminator.
    fn advw_step(&mut self, batch: &Batch) -> Result<LossBreakdown> {
        let mut out = LossBreakdown::default();
        self.update_critics(batch, &mut out)?;
        let (n, d) = (batch.len(), self.action_box.dim());

        let noise = self.standard_normal(n, d)?;
        let mut g = Graph::new();
        let pi = self.pi.bind(&mut g, false);
        let s = g.constant(batch.observations.clone());
        let eps = g.constant(noise);
        let sample = pi.sample(&mut g, s, eps);
        let policy_actions = g.evaluate(sample)?;
        let unit = Uniform::new(0.0, 1.0).map_err(|e| Error::contract(e.to_string()))?;
        let mix: Vec<f64> = (0..n).map(|_| unit.sample(&mut self.noise_rng)).collect();

        let mut g = Graph::new();
        let disc = self.disc.bind(&mut g, true);
        let terms = advw_discriminator_loss(
            &mut g,
            &disc,
            &batch.observations,
            &batch.actions,
            &policy_actions,
            &mix,
            self.config.gp_coef,
        )?;
        out.psi_objective = g.evaluate(terms.dual_gap)?.item();
        let grads = g.gradient(terms.loss, &disc.vars())?;
        gradient_step(&mut self.disc, &mut self.disc_opt, &grads)?;

        let noise = self.standard_normal(n, d)?;
        let frozen = self.frozen();
        let critic: &dyn Critic = match &frozen {
            Some(c) => c,
            None => &self.q,
        };
        let mut g = Graph::new();
        let pi = self.pi.bind(&mut g, true);
        let s = g.constant(batch.observations.clone());
        let eps = g.constant(noise);
        let loss = advw_policy_loss(&mut g, &pi, critic, &self.disc, s, eps, self.config.alpha)?;
        out.pi_loss = g.evaluate(loss)?.item();
        let grads = g.gradient(loss, &pi.vars())?;
        gradient_step(&mut self.pi, &mut self.pi_opt, &grads)?;
        self.update_target()?;
        Ok(out)
    }

    /// Deterministic-mean rollouts of the current policy.
    pub fn evaluate(&self, env: &Env, episodes: usize, seed: u64) -> Result<ReturnStats> {
        evaluate_policy(env, |s| self.pi.mean_action(s), episodes, seed)
    }

    fn optimizers(&self) -> [(&'static str, &Adam); 5] {
        [
            ("q", &self.q_opt),
            ("v", &self.v_opt),
            ("psi", &self.psi_opt),
            ("pi", &self.pi_opt),
            ("disc", &self.disc_opt),
        ]
    }

    pub fn to_archive(&self) -> TensorArchive {
        let meta = Meta {
            format: FORMAT_TAG.into(),
            step: self.step,
            config: self.config.clone(),
            env: self.env.clone(),
            obs_dim: self.obs_dim,
            action_box: self.action_box.clone(),
            batch_rng_word_pos: self.batch_rng.get_word_pos().to_string(),
            noise_rng_word_pos: self.noise_rng.get_word_pos().to_string(),
            optimizer_steps: self
                .optimizers()
                .iter()
                .map(|(_, o)| o.states.first().map_or(0, |s| s.step))
                .collect(),
        };
        let mut a = TensorArchive::new(serde_json::to_value(&meta).unwrap_or(json!(null)));
        a.push_params("q", &self.q);
        a.push_params("v", &self.v);
        a.push_params("psi", &self.psi);
        a.push_params("pi", &self.pi);
        a.push_params("target_q", &self.target_q.shadow);
        a.push_params("disc", &self.disc);
        for (name, opt) in self.optimizers() {
            for (i, s) in opt.states.iter().enumerate() {
                a.push(format!("opt/{name}/{i}/m"), s.first_moment.clone());
                a.push(format!("opt/{name}/{i}/v"), s.second_moment.clone());
            }
        }
        a
    }

    pub fn from_archive(archive: &TensorArchive) -> Result<Self> {
        let meta: Meta = serde_json::from_value(archive.meta.clone())
            .map_err(|e| Error::Format { offset: 16, reason: format!("checkpoint metadata: {e}") })?;
        if meta.format != FORMAT_TAG {
            return Err(Error::Format { offset: 16, reason: format!("not a checkpoint: {}", meta.format) });
        }
        let mut b = CheckpointBundle::new(meta.config, meta.obs_dim, meta.action_box, meta.env)?;
        archive.restore_params("q", &mut b.q)?;
        archive.restore_params("v", &mut b.v)?;
        archive.restore_params("psi", &mut b.psi)?;
        archive.restore_params("pi", &mut b.pi)?;
        archive.restore_params("target_q", &mut b.target_q.shadow)?;
        archive.restore_params("disc", &mut b.disc)?;
        b.psi.check_convexity()?;
        let parse_pos = |s: &str| {
            s.parse::<u128>()
                .map_err(|_| Error::Format { offset: 16, reason: format!("bad stream position {s:?}") })
        };
        b.batch_rng.set_word_pos(parse_pos(&meta.batch_rng_word_pos)?);
        b.noise_rng.set_word_pos(parse_pos(&meta.noise_rng_word_pos)?);
        b.step = meta.step;
        if meta.optimizer_steps.len() != 5 {
            return Err(Error::Format { offset: 16, reason: "expected five optimizer step counts".into() });
        }
        let opts = [&mut b.q_opt, &mut b.v_opt, &mut b.psi_opt, &mut b.pi_opt, &mut b.disc_opt];
        for ((name, opt), steps) in ["q", "v", "psi", "pi", "disc"].into_iter().zip(opts).zip(meta.optimizer_steps) {
            for (i, s) in opt.states.iter_mut().enumerate() {
                for (suffix, slot) in [("m", &mut s.first_moment), ("v", &mut s.second_moment)] {
                    let key = format!("opt/{name}/{i}/{suffix}");
                    let t = archive
                        .get(&key)
                        .ok_or_else(|| Error::contract(format!("checkpoint lacks tensor {key}")))?;
                    if t.shape() != slot.shape() {
                        return Err(Error::contract(format!("tensor {key} has the wrong shape")));
                    }
                    *slot = t.clone();
                }
                s.step = steps;
            }
        }
        Ok(b)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_archive().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        CheckpointBundle::from_archive(&TensorArchive::from_bytes(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CheckpointBundle::from_bytes(&std::fs::read(path)?)
    }
}
