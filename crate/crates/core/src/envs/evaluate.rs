use super::Env;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnStats {
    pub mean: f64,
    /// Population standard deviation over episodes.
    pub std: f64,
}

/// Undiscounted returns of a deterministic policy over `episodes` rollouts.
/// Episode `i` starts from the `i`-th eval sub-stream of `seed`, so two
/// policies evaluated with the same seed face the same initial states.
pub fn evaluate_policy<F>(env: &Env, mut policy: F, episodes: usize, seed: u64) -> Result<ReturnStats>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if episodes == 0 {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    let mut returns = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut r = rng::indexed_stream(seed, rng::EVAL, ep as u64);
        let mut state = env.reset(&mut r);
        let mut total = 0.0;
        for t in 0..env.horizon() {
            let action = policy(&state)?;
            if action.len() != env.act_dim() {
                return Err(Error::contract(format!("policy returned {} action values, expected {}", action.len(), env.act_dim())));
            }
            if action.iter().any(|a| !a.is_finite()) {
                return Err(Error::Numeric { node: 0, op: "policy action" });
            }
            let step = env.step(&state, &action, t);
            total += step.reward;
            state = step.next_state;
            if step.done {
                break;
            }
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / episodes as f64;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / episodes as f64;
    Ok(ReturnStats { mean, std: var.sqrt() })
}
