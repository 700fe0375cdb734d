use super::FrozenCritic;
use crate::diffcore::{Graph, Tensor, Var};
use crate::envs::Batch;
use crate::nets::MlpParams;
use crate::Result;

/// State-action value used as a fixed function: its parameters enter the
/// graph as constants, while gradients still flow into the action input.
pub trait Critic {
    /// `Q(s_i, a_i)` per row, shape `[n, 1]`.
    fn q_graph(&self, g: &mut Graph, s: Var, a: Var) -> Result<Var>;

    fn q_values(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let s = g.constant(states.clone());
        let a = g.constant(actions.clone());
        let q = self.q_graph(&mut g, s, a)?;
        g.evaluate(q)
    }
}

impl Critic for MlpParams {
    fn q_graph(&self, g: &mut Graph, s: Var, a: Var) -> Result<Var> {
        let net = self.bind(g, false);
        let q = net.forward_pair(g, s, a);
        g.check()?;
        Ok(q)
    }
}

impl Critic for FrozenCritic {
    fn q_graph(&self, g: &mut Graph, s: Var, a: Var) -> Result<Var> {
        let (n, d) = (g.value(a).rows(), g.value(a).cols());
        match *self {
            FrozenCritic::Zero => Ok(g.constant(Tensor::zeros(n, 1))),
            FrozenCritic::Quadratic { gain, bias } => {
                let sv = g.value(s).clone();
                let k = sv.cols().max(1);
                let mu: Vec<f64> = (0..n)
                    .flat_map(|i| {
                        let row = sv.row_slice(i).to_vec();
                        (0..d).map(move |j| gain * row.get(j % k).copied().unwrap_or(0.0) + bias)
                    })
                    .collect();
                let mu = g.constant(Tensor::matrix(n, d, mu)?);
                let diff = g.sub(a, mu);
                let sq = g.square(diff);
                let sq = g.sum_cols(sq);
                Ok(g.neg(sq))
            }
        }
    }
}

/// Batch tensors recorded as graph constants.
#[derive(Clone, Copy, Debug)]
pub struct BatchVars {
    pub states: Var,
    pub actions: Var,
    pub rewards: Var,
    pub next_states: Var,
    pub not_done: Var,
}

impl BatchVars {
    pub fn record(g: &mut Graph, batch: &Batch) -> Self {
        BatchVars {
            states: g.constant(batch.observations.clone()),
            actions: g.constant(batch.actions.clone()),
            rewards: g.constant(batch.rewards.clone()),
            next_states: g.constant(batch.next_observations.clone()),
            not_done: g.constant(batch.not_done.clone()),
        }
    }
}
