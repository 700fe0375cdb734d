use super::critic::{BatchVars, Critic};
use crate::diffcore::{Graph, Tensor, Var};
use crate::envs::{ActionBox, Batch};
use crate::nets::{BoundMlp, BoundPicnn, BoundPolicy, MlpParams, PicnnParams};
use crate::{Error, Result};

/// Asymmetric squared loss `|tau - 1{u < 0}| u^2`.
pub fn expectile_loss(u: f64, tau: f64) -> f64 {
    let w = if u < 0.0 { 1.0 - tau } else { tau };
    w * u * u
}

/// Mean expectile loss of the entries of `u`. The asymmetric weights are
/// piecewise constant in `u`, so they enter as constants.
pub fn expectile_graph(g: &mut Graph, u: Var, tau: f64) -> Var {
    let weights = g.value(u).map(|x| if x < 0.0 { 1.0 - tau } else { tau });
    let w = g.constant(weights);
    let u2 = g.square(u);
    let wu = g.mul(w, u2);
    g.mean(wu)
}

/// `mean L_tau(Q_target(s, a) - V(s))`, differentiable in `v` only.
pub fn v_loss(g: &mut Graph, v: &BoundMlp, target_q: &dyn Critic, b: &BatchVars, tau: f64) -> Result<Var> {
    let q = target_q.q_graph(g, b.states, b.actions)?;
    let q = g.detach(q);
    let vs = v.forward(g, b.states);
    let u = g.sub(q, vs);
    Ok(expectile_graph(g, u, tau))
}

/// Mean squared Bellman error `(r + gamma (1 - done) V(s') - Q(s, a))^2`,
/// differentiable in `q` only.
pub fn q_loss(g: &mut Graph, q: &BoundMlp, v: &MlpParams, b: &BatchVars, gamma: f64) -> Var {
    let v_net = v.bind(g, false);
    let v_next = v_net.forward(g, b.next_states);
    let boot = g.mul(v_next, b.not_done);
    let boot = g.scale(boot, gamma);
    let target = g.add(b.rewards, boot);
    let target = g.detach(target);
    let pred = q.forward_pair(g, b.states, b.actions);
    let resid = g.sub(target, pred);
    let sq = g.square(resid);
    g.mean(sq)
}

#[derive(Clone, Copy, Debug)]
pub struct PsiTerms {
    /// `mean Q(s, T(a)) - alpha * penalty`, to be maximized.
    pub objective: Var,
    /// `mean |a - T(a)|^2`.
    pub penalty: Var,
    /// `T(a) = grad_a psi(s, a)` per row.
    pub transported: Var,
}

/// Transport objective with the map kept differentiable in the potential's
/// parameters (gradients pass through `grad_a psi`).
pub fn psi_objective(g: &mut Graph, psi: &BoundPicnn, critic: &dyn Critic, b: &BatchVars, alpha: f64) -> Result<PsiTerms> {
    let t = psi.action_gradient(g, b.states, b.actions)?;
    let q = critic.q_graph(g, b.states, t)?;
    let q_mean = g.mean(q);
    let diff = g.sub(b.actions, t);
    let sq = g.square(diff);
    let rows = g.sum_cols(sq);
    let penalty = g.mean(rows);
    let reg = g.scale(penalty, alpha);
    let objective = g.sub(q_mean, reg);
    g.check()?;
    Ok(PsiTerms {
        objective,
        penalty,
        transported: t,
    })
}

/// `min(exp(beta (q - v)), clip)`.
pub fn advantage_weight(q: f64, v: f64, beta: f64, clip: f64) -> f64 {
    (beta * (q - v)).exp().min(clip)
}

/// Regression targets and weights for the policy update.
#[derive(Clone, Debug)]
pub struct AwrTargets {
    /// Transported (or dataset) actions clipped to the box.
    pub actions: Tensor,
    pub weights: Tensor,
    pub mean_advantage: f64,
}

/// Targets for advantage-weighted regression. Without `psi` the dataset
/// actions are used as is; without `v` the state value is taken as 0.
#[allow(clippy::too_many_arguments)]
pub fn awr_targets(
    batch: &Batch,
    psi: Option<&PicnnParams>,
    critic: &dyn Critic,
    v: Option<&MlpParams>,
    bounds: &ActionBox,
    beta: f64,
    clip: f64,
) -> Result<AwrTargets> {
    let moved = match psi {
        Some(p) => p.action_gradient_batch(&batch.observations, &batch.actions)?,
        None => batch.actions.clone(),
    };
    let n = moved.rows();
    let clipped: Vec<f64> = (0..n).flat_map(|i| bounds.clip(moved.row_slice(i))).collect();
    let actions = Tensor::matrix(n, moved.cols(), clipped)?;
    let q = critic.q_values(&batch.observations, &actions)?;
    let vs = match v {
        Some(v) => crate::nets::mlp_forward(v, &batch.observations)?,
        None => Tensor::zeros(n, 1),
    };
    let adv: Vec<f64> = q.data().iter().zip(vs.data()).map(|(q, v)| q - v).collect();
    let weights: Vec<f64> = adv.iter().map(|&a| advantage_weight(a, 0.0, beta, clip)).collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric { node: 0, op: "advantage weight" });
    }
    Ok(AwrTargets {
        actions,
        weights: Tensor::matrix(n, 1, weights)?,
        mean_advantage: adv.iter().sum::<f64>() / n.max(1) as f64,
    })
}

/// `-mean_i w_i log pi(target_i | s_i)`.
pub fn awr_policy_loss(g: &mut Graph, pi: &BoundPolicy, states: Var, targets: &AwrTargets) -> Var {
    let a = g.constant(targets.actions.clone());
    let w = g.constant(targets.weights.clone());
    let lp = pi.log_prob(g, states, a);
    let wlp = g.mul(w, lp);
    let m = g.mean(wlp);
    g.neg(m)
}

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorTerms {
    pub loss: Var,
    /// `mean g(s, a_data) - mean g(s, a_pi)`, the dual W1 estimate.
    pub dual_gap: Var,
    pub penalty: Var,
}

/// Critic loss of the adversarial W1 baseline: negative dual gap plus a
/// gradient penalty at interpolates `mix * a_data + (1 - mix) * a_pi`.
pub fn advw_discriminator_loss(
    g: &mut Graph,
    disc: &BoundMlp,
    states: &Tensor,
    data_actions: &Tensor,
    policy_actions: &Tensor,
    mix: &[f64],
    gp_coef: f64,
) -> Result<DiscriminatorTerms> {
    let n = data_actions.rows();
    if policy_actions.shape() != data_actions.shape() || mix.len() != n || states.rows() != n {
        return Err(Error::contract("discriminator batch pieces disagree in shape"));
    }
    let d = data_actions.cols();
    let interp: Vec<f64> = (0..n)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| mix[i] * data_actions.get(i, j) + (1.0 - mix[i]) * policy_actions.get(i, j))
        .collect();
    let s = g.constant(states.clone());
    let ad = g.constant(data_actions.clone());
    let ap = g.constant(policy_actions.clone());
    let ai = g.constant(Tensor::matrix(n, d, interp)?);
    let gd = disc.forward_pair(g, s, ad);
    let gp = disc.forward_pair(g, s, ap);
    let md = g.mean(gd);
    let mp = g.mean(gp);
    let dual_gap = g.sub(md, mp);
    let gi = disc.forward_pair(g, s, ai);
    let total = g.sum(gi);
    let grad = g.grad_vars(total, &[ai])?[0];
    let sq = g.square(grad);
    let norm2 = g.sum_cols(sq);
    let norm2 = g.add_scalar(norm2, 1e-12);
    let norm = g.sqrt(norm2);
    let dev = g.add_scalar(norm, -1.0);
    let dev2 = g.square(dev);
    let penalty = g.mean(dev2);
    let neg_gap = g.neg(dual_gap);
    let pen = g.scale(penalty, gp_coef);
    let loss = g.add(neg_gap, pen);
    g.check()?;
    Ok(DiscriminatorTerms { loss, dual_gap, penalty })
}

/// Policy loss of the adversarial baseline, `-mean[Q(s, a_pi) + alpha g(s, a_pi)]`
/// with reparameterized `a_pi`. Raising `g` on policy actions shrinks the
/// dual gap, so minimizing this loss trades value against the W1 estimate.
pub fn advw_policy_loss(
    g: &mut Graph,
    pi: &BoundPolicy,
    critic: &dyn Critic,
    disc: &MlpParams,
    states: Var,
    noise: Var,
    alpha: f64,
) -> Result<Var> {
    let a = pi.sample(g, states, noise);
    let q = critic.q_graph(g, states, a)?;
    let dnet = disc.bind(g, false);
    let dv = dnet.forward_pair(g, states, a);
    let dv = g.scale(dv, alpha);
    let total = g.add(q, dv);
    let m = g.mean(total);
    Ok(g.neg(m))
}
