use serde::{Deserialize, Serialize};

use super::{bind_all, fan_in_uniform, Parameters};
use crate::diffcore::{Graph, Tensor, Var};
use crate::rng::Rng;
use crate::{Error, Result};

/// Scale applied to the convex output weights at initialization so the
/// initial transport map stays close to the identity.
const HEAD_SCALE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Softplus => g.softplus(x),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Softplus => "softplus",
        })
    }
}

/// Partially input-convex potential `psi(s, a)`, convex in `a`.
///
/// ```text
/// u   = relu(s Wu + bu)                          state trunk, unconstrained
/// z1  = act(a A0 + u U0 + b0)
/// z2  = act(z1 Wz1 + a A1 + u U1 + b1)            Wz1 >= 0
/// psi = z2 wz + a aout + bout + 1/2 sum_j q_j a_j^2   wz >= 0, q >= 0
/// ```
///
/// `act` is convex and nondecreasing, so every `z` is convex in `a` and the
/// nonnegative combinations preserve that. The diagonal quadratic `q` starts
/// at 1, which makes the initial map close to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct PicnnParams {
    pub state_dim: usize,
    pub action_dim: usize,
    pub activation: Activation,
    pub state_w: Tensor,
    pub state_b: Tensor,
    pub a0: Tensor,
    pub u0: Tensor,
    pub b0: Tensor,
    pub wz1: Tensor,
    pub a1: Tensor,
    pub u1: Tensor,
    pub b1: Tensor,
    pub wz_out: Tensor,
    pub a_out: Tensor,
    pub b_out: Tensor,
    pub quad: Tensor,
}

fn abs_uniform(rng: &mut Rng, rows: usize, cols: usize, fan_in: usize, scale: f64) -> Tensor {
    fan_in_uniform(rng, rows, cols, fan_in).map(|v| v.abs() * scale)
}

impl PicnnParams {
    pub fn new(
        rng: &mut Rng,
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        activation: Activation,
    ) -> Self {
        let (k, d, h) = (state_dim, action_dim, hidden);
        PicnnParams {
            state_dim,
            action_dim,
            activation,
            state_w: fan_in_uniform(rng, k, h, k),
            state_b: fan_in_uniform(rng, 1, h, k),
            a0: fan_in_uniform(rng, d, h, d + h),
            u0: fan_in_uniform(rng, h, h, d + h),
            b0: fan_in_uniform(rng, 1, h, d + h),
            wz1: abs_uniform(rng, h, h, h, 1.0),
            a1: fan_in_uniform(rng, d, h, 2 * h + d),
            u1: fan_in_uniform(rng, h, h, 2 * h + d),
            b1: fan_in_uniform(rng, 1, h, 2 * h + d),
            wz_out: abs_uniform(rng, h, 1, h, HEAD_SCALE),
            a_out: Tensor::zeros(d, 1),
            b_out: Tensor::zeros(1, 1),
            quad: Tensor::filled(1, d, 1.0),
        }
    }

    /// All parameters zero, including the quadratic term: `psi == 0`.
    pub fn zeros(state_dim: usize, action_dim: usize, hidden: usize, activation: Activation) -> Self {
        let (k, d, h) = (state_dim, action_dim, hidden);
        PicnnParams {
            state_dim,
            action_dim,
            activation,
            state_w: Tensor::zeros(k, h),
            state_b: Tensor::zeros(1, h),
            a0: Tensor::zeros(d, h),
            u0: Tensor::zeros(h, h),
            b0: Tensor::zeros(1, h),
            wz1: Tensor::zeros(h, h),
            a1: Tensor::zeros(d, h),
            u1: Tensor::zeros(h, h),
            b1: Tensor::zeros(1, h),
            wz_out: Tensor::zeros(h, 1),
            a_out: Tensor::zeros(d, 1),
            b_out: Tensor::zeros(1, 1),
            quad: Tensor::zeros(1, d),
        }
    }

    /// `psi(s, a) = 1/2 |a|^2`, whose gradient map is the identity.
    pub fn identity(state_dim: usize, action_dim: usize, hidden: usize, activation: Activation) -> Self {
        let mut p = PicnnParams::zeros(state_dim, action_dim, hidden, activation);
        p.quad = Tensor::filled(1, action_dim, 1.0);
        p
    }

    pub fn hidden(&self) -> usize {
        self.wz1.rows()
    }

    /// Tensors that must stay entrywise nonnegative.
    fn constrained(&self) -> [(&'static str, &Tensor); 3] {
        [("wz1", &self.wz1), ("wz_out", &self.wz_out), ("quad", &self.quad)]
    }

    pub fn check_convexity(&self) -> Result<()> {
        for (name, t) in self.constrained() {
            if let Some(i) = t.data().iter().position(|&v| v < 0.0) {
                return Err(Error::Convexity(format!(
                    "{name}[{i}] = {} is negative",
                    t.data()[i]
                )));
            }
        }
        Ok(())
    }

    /// In-place projection of the constrained tensors onto `>= 0`.
    pub fn project(&mut self) {
        for t in [&mut self.wz1, &mut self.wz_out, &mut self.quad] {
            for v in t.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<BoundPicnn> {
        self.check_convexity()?;
        let v = bind_all(g, self.tensors(), trainable);
        Ok(BoundPicnn {
            activation: self.activation,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            vars: v.try_into().expect("13 tensors"),
        })
    }

    /// `grad_a psi` for every row of a batch.
    pub fn action_gradient_batch(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let net = self.bind(&mut g, false)?;
        let s = g.constant(states.clone());
        let a = g.constant(actions.clone());
        let t = net.action_gradient(&mut g, s, a)?;
        g.evaluate(t)
    }

    /// `psi` for every row of a batch, shape `[n, 1]`.
    pub fn forward_batch(&self, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let net = self.bind(&mut g, false)?;
        let s = g.constant(states.clone());
        let a = g.constant(actions.clone());
        let psi = net.forward(&mut g, s, a)?;
        g.evaluate(psi)
    }
}

impl Parameters for PicnnParams {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.state_w,
            &self.state_b,
            &self.a0,
            &self.u0,
            &self.b0,
            &self.wz1,
            &self.a1,
            &self.u1,
            &self.b1,
            &self.wz_out,
            &self.a_out,
            &self.b_out,
            &self.quad,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.state_w,
            &mut self.state_b,
            &mut self.a0,
            &mut self.u0,
            &mut self.b0,
            &mut self.wz1,
            &mut self.a1,
            &mut self.u1,
            &mut self.b1,
            &mut self.wz_out,
            &mut self.a_out,
            &mut self.b_out,
            &mut self.quad,
        ]
    }

    fn tensor_names(&self) -> Vec<String> {
        [
            "state_w", "state_b", "a0", "u0", "b0", "wz1", "a1", "u1", "b1", "wz_out", "a_out",
            "b_out", "quad",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}

#[derive(Clone, Debug)]
pub struct BoundPicnn {
    activation: Activation,
    state_dim: usize,
    action_dim: usize,
    vars: [Var; 13],
}

impl BoundPicnn {
    pub fn vars(&self) -> Vec<Var> {
        self.vars.to_vec()
    }

    /// `psi(s_i, a_i)` per row, shape `[n, 1]`.
    pub fn forward(&self, g: &mut Graph, s: Var, a: Var) -> Result<Var> {
        let (sc, ac) = (g.value(s).cols(), g.value(a).cols());
        if sc != self.state_dim || ac != self.action_dim || g.value(s).rows() != g.value(a).rows()
        {
            return Err(Error::contract(format!(
                "psi expects state/action dims {}/{}, got {sc}/{ac}",
                self.state_dim, self.action_dim
            )));
        }
        let [sw, sb, a0, u0, b0, wz1, a1, u1, b1, wz, aout, bout, quad] = self.vars;
        let u = g.matmul(s, sw);
        let u = g.add_row(u, sb);
        let u = g.relu(u);

        let p0 = g.matmul(a, a0);
        let q0 = g.matmul(u, u0);
        let p0 = g.add(p0, q0);
        let p0 = g.add_row(p0, b0);
        let z1 = self.activation.apply(g, p0);

        let p1 = g.matmul(z1, wz1);
        let pa = g.matmul(a, a1);
        let pu = g.matmul(u, u1);
        let p1 = g.add(p1, pa);
        let p1 = g.add(p1, pu);
        let p1 = g.add_row(p1, b1);
        let z2 = self.activation.apply(g, p1);

        let out = g.matmul(z2, wz);
        let lin = g.matmul(a, aout);
        let out = g.add(out, lin);
        let out = g.add_row(out, bout);
        let a2 = g.square(a);
        let qa = g.mul_row(a2, quad);
        let qa = g.sum_cols(qa);
        let qa = g.scale(qa, 0.5);
        Ok(g.add(out, qa))
    }

    /// `grad_a psi(s_i, a_i)` per row as a differentiable subgraph.
    pub fn action_gradient(&self, g: &mut Graph, s: Var, a: Var) -> Result<Var> {
        let psi = self.forward(g, s, a)?;
        let total = g.sum(psi);
        Ok(g.grad_vars(total, &[a])?[0])
    }
}

fn single(values: &[f64]) -> Tensor {
    Tensor::row(values)
}

/// `psi(s, a)` for a single state-action pair.
pub fn picnn_forward(params: &PicnnParams, s: &[f64], a: &[f64]) -> Result<f64> {
    Ok(params.forward_batch(&single(s), &single(a))?.item())
}

/// `grad_a psi(s, a)` for a single state-action pair.
pub fn picnn_action_gradient(params: &PicnnParams, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    Ok(params
        .action_gradient_batch(&single(s), &single(a))?
        .into_data())
}

/// Copy of `params` with every constrained weight clipped at zero.
pub fn project_nonneg(params: &PicnnParams) -> PicnnParams {
    let mut p = params.clone();
    p.project();
    p
}
