use super::tensor::Tensor;
use crate::{Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;

/// Per-tensor Adam moments and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Tensor,
    pub second_moment: Tensor,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(like: &Tensor, learning_rate: f64) -> Self {
        let zeros = Tensor::new(like.shape().to_vec(), vec![0.0; like.len()]).expect("shape");
        AdamState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update; advances `state` by one step.
pub fn adam_step(param: &Tensor, grad: &Tensor, state: &mut AdamState) -> Result<Tensor> {
    if param.shape() != grad.shape() || param.shape() != state.first_moment.shape() {
        return Err(Error::contract(format!(
            "adam: param {:?}, grad {:?}, state {:?}",
            param.shape(),
            grad.shape(),
            state.first_moment.shape()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let mut out = param.clone();
    let m = state.first_moment.data_mut();
    for (i, &g) in grad.data().iter().enumerate() {
        m[i] = b1 * m[i] + (1.0 - b1) * g;
    }
    let v = state.second_moment.data_mut();
    for (i, &g) in grad.data().iter().enumerate() {
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
    }
    let m = state.first_moment.data();
    let v = state.second_moment.data();
    for (i, p) in out.data_mut().iter_mut().enumerate() {
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(out)
}

/// Adam over an ordered list of tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub states: Vec<AdamState>,
}

impl Adam {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, learning_rate: f64) -> Self {
        Adam {
            states: params
                .into_iter()
                .map(|p| AdamState::new(p, learning_rate))
                .collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::contract(format!(
                "adam over {} tensors given {} params and {} grads",
                self.states.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), s) in params.into_iter().zip(grads).zip(&mut self.states) {
            *p = adam_step(p, g, s)?;
        }
        Ok(())
    }
}
