use super::{bind_all, BoundMlp, MlpParams, Parameters};
use crate::diffcore::{Graph, Tensor, Var};
use crate::envs::ActionBox;
use crate::rng::Rng;
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian policy with a tanh-squashed mean and a state-independent
/// learnable log standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicyParams {
    pub trunk: MlpParams,
    pub log_std: Tensor,
    pub action_box: ActionBox,
}

impl GaussianPolicyParams {
    pub fn new(rng: &mut Rng, state_dim: usize, hidden: usize, action_box: ActionBox) -> Self {
        let d = action_box.dim();
        GaussianPolicyParams {
            trunk: MlpParams::new(rng, state_dim, hidden, d),
            log_std: Tensor::zeros(1, d),
            action_box,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_box.dim()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundPolicy {
        let vars = bind_all(g, self.tensors(), trainable);
        let n = vars.len();
        let trunk_vars = vars[..n - 1].to_vec();
        let trunk = BoundMlp::from_vars(self.trunk.input_dim, trunk_vars);
        let center = g.constant(Tensor::row(&self.action_box.center()));
        let half = g.constant(Tensor::row(&self.action_box.half_width()));
        BoundPolicy {
            trunk,
            log_std: vars[n - 1],
            center,
            half,
        }
    }

    /// Deterministic action used for evaluation.
    pub fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let s = g.constant(Tensor::row(state));
        let m = p.mean(&mut g, s);
        Ok(g.evaluate(m)?.into_data())
    }

    pub fn mean_batch(&self, states: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.bind(&mut g, false);
        let s = g.constant(states.clone());
        let m = p.mean(&mut g, s);
        g.evaluate(m)
    }

    /// Standard deviation after clamping the log-std.
    pub fn std(&self) -> Vec<f64> {
        self.log_std
            .data()
            .iter()
            .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX).exp())
            .collect()
    }
}

impl Parameters for GaussianPolicyParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.trunk.tensors();
        t.push(&self.log_std);
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.trunk.tensors_mut();
        t.push(&mut self.log_std);
        t
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut n: Vec<String> = self
            .trunk
            .tensor_names()
            .into_iter()
            .map(|s| format!("trunk.{s}"))
            .collect();
        n.push("log_std".into());
        n
    }
}

#[derive(Clone, Debug)]
pub struct BoundPolicy {
    trunk: BoundMlp,
    log_std: Var,
    center: Var,
    half: Var,
}

impl BoundPolicy {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.trunk.vars();
        v.push(self.log_std);
        v
    }

    /// `center + half * tanh(trunk(s))`, always inside the action box.
    pub fn mean(&self, g: &mut Graph, s: Var) -> Var {
        let h = self.trunk.forward(g, s);
        let t = g.tanh(h);
        let t = g.mul_row(t, self.half);
        g.add_row(t, self.center)
    }

    pub fn clamped_log_std(&self, g: &mut Graph) -> Var {
        g.clamp(self.log_std, LOG_STD_MIN, LOG_STD_MAX)
    }

    /// Per-row diagonal Gaussian log density, shape `[n, 1]`.
    pub fn log_prob(&self, g: &mut Graph, s: Var, a: Var) -> Var {
        let mu = self.mean(g, s);
        let n = g.value(a).rows();
        let d = g.value(a).cols();
        let ls = self.clamped_log_std(g);
        let neg_ls = g.neg(ls);
        let inv_std = g.exp(neg_ls);
        let diff = g.sub(a, mu);
        let z = g.mul_row(diff, inv_std);
        let z2 = g.square(z);
        let quad = g.sum_cols(z2);
        let quad = g.scale(quad, -0.5);
        let quad = g.add_scalar(quad, -(d as f64) * HALF_LN_2PI);
        let log_det = g.sum(ls);
        let log_det = g.broadcast_scalar(log_det, n, 1);
        g.sub(quad, log_det)
    }

    /// Reparameterized sample `mean + std * noise`, clipped to the box.
    pub fn sample(&self, g: &mut Graph, s: Var, noise: Var) -> Var {
        let mu = self.mean(g, s);
        let ls = self.clamped_log_std(g);
        let std = g.exp(ls);
        let eps = g.mul_row(noise, std);
        let a = g.add(mu, eps);
        self.clip(g, a)
    }

    /// Clip each row to the action box (zero gradient outside).
    pub fn clip(&self, g: &mut Graph, a: Var) -> Var {
        let neg_center = g.neg(self.center);
        let x = g.add_row(a, neg_center);
        let inv_half = g.recip(self.half);
        let x = g.mul_row(x, inv_half);
        let x = g.clamp(x, -1.0, 1.0);
        let x = g.mul_row(x, self.half);
        g.add_row(x, self.center)
    }
}

/// Log density of `a` under the policy at state `s`.
pub fn gaussian_log_prob(params: &GaussianPolicyParams, s: &[f64], a: &[f64]) -> Result<f64> {
    if a.len() != params.action_dim() {
        return Err(Error::contract("action dimension mismatch"));
    }
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let sv = g.constant(Tensor::row(s));
    let av = g.constant(Tensor::row(a));
    let lp = p.log_prob(&mut g, sv, av);
    Ok(g.evaluate(lp)?.item())
}
