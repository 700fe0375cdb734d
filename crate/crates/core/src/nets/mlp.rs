use super::{bind_all, fan_in_uniform, Parameters};
use crate::diffcore::{Graph, Tensor, Var};
use crate::rng::Rng;
use crate::{Error, Result};

/// Fully connected layer, `y = x W + b` with `W: [in, out]`, `b: [1, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init(rng: &mut Rng, input: usize, output: usize) -> Self {
        Linear {
            weight: fan_in_uniform(rng, input, output, input),
            bias: fan_in_uniform(rng, 1, output, input),
        }
    }

    fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Tensor::zeros(input, output),
            bias: Tensor::zeros(1, output),
        }
    }
}

/// Two hidden relu layers followed by a linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<Linear>,
}

impl MlpParams {
    pub fn new(rng: &mut Rng, input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        MlpParams {
            input_dim,
            output_dim,
            layers: vec![
                Linear::init(rng, input_dim, hidden),
                Linear::init(rng, hidden, hidden),
                Linear::init(rng, hidden, output_dim),
            ],
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        MlpParams {
            input_dim,
            output_dim,
            layers: vec![
                Linear::zeros(input_dim, hidden),
                Linear::zeros(hidden, hidden),
                Linear::zeros(hidden, output_dim),
            ],
        }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundMlp {
        let vars = bind_all(g, self.tensors(), trainable);
        BoundMlp::from_vars(self.input_dim, vars)
    }
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}.weight"), format!("layer{i}.bias")])
            .collect()
    }
}

/// An [`MlpParams`] recorded on a graph.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    input_dim: usize,
    layers: Vec<(Var, Var)>,
}

impl BoundMlp {
    pub(crate) fn from_vars(input_dim: usize, vars: Vec<Var>) -> BoundMlp {
        BoundMlp {
            input_dim,
            layers: vars.chunks(2).map(|c| (c[0], c[1])).collect(),
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn forward(&self, g: &mut Graph, input: Var) -> Var {
        let mut h = input;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = g.matmul(h, w);
            h = g.add_row(z, b);
            if i < last {
                h = g.relu(h);
            }
        }
        h
    }

    /// Forward on `[x | y]`, the usual input for Q-functions.
    pub fn forward_pair(&self, g: &mut Graph, x: Var, y: Var) -> Var {
        let xy = g.concat(x, y);
        self.forward(g, xy)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
}

/// Batch forward pass outside of any training graph.
pub fn mlp_forward(params: &MlpParams, input: &Tensor) -> Result<Tensor> {
    if input.cols() != params.input_dim {
        return Err(Error::contract(format!(
            "mlp expects {} input columns, got {}",
            params.input_dim,
            input.cols()
        )));
    }
    let mut g = Graph::new();
    let net = params.bind(&mut g, false);
    let x = g.constant(input.clone());
    let y = net.forward(&mut g, x);
    g.evaluate(y)
}
