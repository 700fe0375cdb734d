use super::tensor::{matmul, Tensor};
use crate::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

// shape arguments are only read when re-deriving adjoints
#[allow(dead_code)]
#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    /// `[r, c] + [1, c]` with the row repeated.
    AddRow(Var, Var),
    BroadcastRows(Var, usize),
    SumRows(Var),
    BroadcastCols(Var, usize),
    SumCols(Var),
    BroadcastScalar(Var, usize, usize),
    Sum(Var),
    Mean(Var),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Recip(Var),
    Square(Var),
    Sqrt(Var),
    Clamp(Var, f64, f64),
    Concat(Var, Var),
    SliceCols(Var, usize, usize),
    PadCols(Var, usize, usize),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul { .. } => "matmul",
            Op::AddRow(..) => "add_row",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::SumRows(..) => "sum_rows",
            Op::BroadcastCols(..) => "broadcast_cols",
            Op::SumCols(..) => "sum_cols",
            Op::BroadcastScalar(..) => "broadcast_scalar",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Relu(..) => "relu",
            Op::Softplus(..) => "softplus",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Recip(..) => "recip",
            Op::Square(..) => "square",
            Op::Sqrt(..) => "sqrt",
            Op::Clamp(..) => "clamp",
            Op::Concat(..) => "concat",
            Op::SliceCols(..) => "slice_cols",
            Op::PadCols(..) => "pad_cols",
        }
    }

    pub(crate) fn inputs(&self) -> [Option<Var>; 2] {
        match *self {
            Op::Leaf => [None, None],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::Concat(a, b)
            | Op::MatMul { a, b, .. } => [Some(a), Some(b)],
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::BroadcastRows(a, _)
            | Op::SumRows(a)
            | Op::BroadcastCols(a, _)
            | Op::SumCols(a)
            | Op::BroadcastScalar(a, _, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Relu(a)
            | Op::Softplus(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Recip(a)
            | Op::Square(a)
            | Op::Sqrt(a)
            | Op::Clamp(a, _, _)
            | Op::SliceCols(a, _, _)
            | Op::PadCols(a, _, _) => [Some(a), None],
        }
    }
}

pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
}

/// Dynamically built computation tape.
///
/// Values are computed eagerly as nodes are recorded. Shape mismatches and
/// non-finite values do not panic: the first one is remembered and reported
/// by [`Graph::evaluate`], [`Graph::gradient`] and [`Graph::check`].
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    error: Option<Error>,
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable leaf.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient unless explicitly requested.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let value = match value.dims() {
            Some((r, c)) => Tensor::new(vec![r, c], value.into_data()).expect("dims checked"),
            None => {
                self.fail(Error::contract("graph tensors must have rank <= 2"));
                Tensor::zeros(1, 1)
            }
        };
        self.push(Op::Leaf, value, requires_grad)
    }

    /// Copy of `x`'s value as a constant leaf.
    pub fn detach(&mut self, x: Var) -> Var {
        let v = self.nodes[x.0].value.clone();
        self.constant(v)
    }

    pub fn value(&self, x: Var) -> &Tensor {
        &self.nodes[x.0].value
    }

    pub fn requires_grad(&self, x: Var) -> bool {
        self.nodes[x.0].requires_grad
    }

    /// First recorded failure, if any.
    pub fn check(&self) -> Result<()> {
        match &self.error {
            None => Ok(()),
            Some(Error::Numeric { node, op }) => Err(Error::Numeric { node: *node, op }),
            Some(e) => Err(Error::contract(e.to_string())),
        }
    }

    pub(crate) fn fail(&mut self, err: Error) {
        if self.error.is_none() {
            self.error = Some(err);
        }
    }

    pub(crate) fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        if self.error.is_none() && !value.is_finite() {
            self.error = Some(Error::Numeric {
                node: id,
                op: op.name(),
            });
        }
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(id)
    }

    fn dims(&self, x: Var) -> (usize, usize) {
        self.nodes[x.0].value.dims().expect("graph values are rank 2")
    }

    fn grad_any(&self, xs: &[Var]) -> bool {
        xs.iter().any(|x| self.nodes[x.0].requires_grad)
    }

    fn mismatch(&mut self, what: &str, a: Var, b: Var) -> Var {
        let msg = format!(
            "{what}: incompatible shapes {:?} and {:?}",
            self.dims(a),
            self.dims(b)
        );
        self.fail(Error::contract(msg));
        self.push(Op::Leaf, Tensor::zeros(1, 1), false)
    }

    fn unary(&mut self, op: Op, x: Var, f: impl Fn(f64) -> f64) -> Var {
        let v = self.nodes[x.0].value.map(f);
        let rg = self.grad_any(&[x]);
        self.push(op, v, rg)
    }

    fn binary_same(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Var {
        if self.dims(a) != self.dims(b) {
            return self.mismatch(op.name(), a, b);
        }
        let v = self.nodes[a.0].value.zip_map(&self.nodes[b.0].value, f);
        let rg = self.grad_any(&[a, b]);
        self.push(op, v, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_same(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_same(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_same(Op::Mul(a, b), a, b, |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(Op::Scale(x, c), x, |v| c * v)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(Op::AddScalar(x, c), x, |v| v + c)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) * op(b)`, where `ta`/`tb` transpose the operand.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Var {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        let k1 = if ta { ar } else { ac };
        let k2 = if tb { bc } else { br };
        if k1 != k2 {
            return self.mismatch("matmul", a, b);
        }
        let v = matmul(&self.nodes[a.0].value, ta, &self.nodes[b.0].value, tb);
        let rg = self.grad_any(&[a, b]);
        self.push(Op::MatMul { a, b, ta, tb }, v, rg)
    }

    /// `x + row` with `row` of shape `[1, c]` repeated over the rows of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (r, c) = self.dims(x);
        if self.dims(row) != (1, c) {
            return self.mismatch("add_row", x, row);
        }
        let xv = &self.nodes[x.0].value;
        let bv = self.nodes[row.0].value.data();
        let mut data = xv.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += bv[j];
            }
        }
        let v = Tensor::matrix(r, c, data).expect("dims");
        let rg = self.grad_any(&[x, row]);
        self.push(Op::AddRow(x, row), v, rg)
    }

    pub fn broadcast_rows(&mut self, row: Var, rows: usize) -> Var {
        let (r, c) = self.dims(row);
        if r != 1 {
            self.fail(Error::contract("broadcast_rows needs a single row"));
        }
        let src = self.nodes[row.0].value.data();
        let mut data = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            data.extend_from_slice(&src[..c.min(src.len())]);
        }
        let v = Tensor::matrix(rows, c, data).expect("dims");
        let rg = self.grad_any(&[row]);
        self.push(Op::BroadcastRows(row, rows), v, rg)
    }

    /// Column sums, `[r, c] -> [1, c]`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let xv = self.nodes[x.0].value.data();
        let mut data = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                data[j] += xv[i * c + j];
            }
        }
        let v = Tensor::matrix(1, c, data).expect("dims");
        let rg = self.grad_any(&[x]);
        self.push(Op::SumRows(x), v, rg)
    }

    pub fn broadcast_cols(&mut self, col: Var, cols: usize) -> Var {
        let (r, c) = self.dims(col);
        if c != 1 {
            self.fail(Error::contract("broadcast_cols needs a single column"));
        }
        let src = self.nodes[col.0].value.data();
        let mut data = Vec::with_capacity(r * cols);
        for i in 0..r {
            data.extend(std::iter::repeat_n(src[i * c], cols));
        }
        let v = Tensor::matrix(r, cols, data).expect("dims");
        let rg = self.grad_any(&[col]);
        self.push(Op::BroadcastCols(col, cols), v, rg)
    }

    /// Row sums, `[r, c] -> [r, 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let xv = self.nodes[x.0].value.data();
        let data = (0..r).map(|i| xv[i * c..(i + 1) * c].iter().sum()).collect();
        let v = Tensor::matrix(r, 1, data).expect("dims");
        let rg = self.grad_any(&[x]);
        self.push(Op::SumCols(x), v, rg)
    }

    pub fn broadcast_scalar(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        if self.dims(x) != (1, 1) {
            self.fail(Error::contract("broadcast_scalar needs a [1, 1] input"));
        }
        let s = self.nodes[x.0].value.data()[0];
        let rg = self.grad_any(&[x]);
        self.push(Op::BroadcastScalar(x, rows, cols), Tensor::filled(rows, cols, s), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        let rg = self.grad_any(&[x]);
        self.push(Op::Sum(x), Tensor::scalar(s), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.nodes[x.0].value.data();
        let n = xv.len();
        let s = xv.iter().sum::<f64>() / n.max(1) as f64;
        if n == 0 {
            self.fail(Error::contract("mean of an empty tensor"));
        }
        let rg = self.grad_any(&[x]);
        self.push(Op::Mean(x), Tensor::scalar(s), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(Op::Relu(x), x, |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(Op::Softplus(x), x, softplus)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Op::Sigmoid(x), x, sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Op::Tanh(x), x, f64::tanh)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Op::Exp(x), x, f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(Op::Log(x), x, f64::ln)
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.unary(Op::Recip(x), x, |v| 1.0 / v)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(Op::Square(x), x, |v| v * v)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(Op::Sqrt(x), x, f64::sqrt)
    }

    /// Entrywise clamp to `[lo, hi]`; the gradient is zero where clamped.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(Op::Clamp(x, lo, hi), x, |v| v.clamp(lo, hi))
    }

    /// Column-wise concatenation of two matrices with equal row counts.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.dims(a);
        let (br, bc) = self.dims(b);
        if ar != br {
            return self.mismatch("concat", a, b);
        }
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut data = Vec::with_capacity(ar * (ac + bc));
        for i in 0..ar {
            data.extend_from_slice(&av[i * ac..(i + 1) * ac]);
            data.extend_from_slice(&bv[i * bc..(i + 1) * bc]);
        }
        let v = Tensor::matrix(ar, ac + bc, data).expect("dims");
        let rg = self.grad_any(&[a, b]);
        self.push(Op::Concat(a, b), v, rg)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let (r, c) = self.dims(x);
        if start > end || end > c {
            self.fail(Error::contract(format!("slice {start}..{end} of {c} columns")));
            return self.push(Op::Leaf, Tensor::zeros(1, 1), false);
        }
        let xv = self.nodes[x.0].value.data();
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&xv[i * c + start..i * c + end]);
        }
        let v = Tensor::matrix(r, w, data).expect("dims");
        let rg = self.grad_any(&[x]);
        self.push(Op::SliceCols(x, start, end), v, rg)
    }

    /// Embed `x` at column offset `start` in a zero matrix of `total` columns.
    pub fn pad_cols(&mut self, x: Var, start: usize, total: usize) -> Var {
        let (r, c) = self.dims(x);
        if start + c > total {
            self.fail(Error::contract("pad_cols out of range"));
            return self.push(Op::Leaf, Tensor::zeros(1, 1), false);
        }
        let xv = self.nodes[x.0].value.data();
        let mut data = vec![0.0; r * total];
        for i in 0..r {
            data[i * total + start..i * total + start + c].copy_from_slice(&xv[i * c..(i + 1) * c]);
        }
        let v = Tensor::matrix(r, total, data).expect("dims");
        let rg = self.grad_any(&[x]);
        self.push(Op::PadCols(x, start, total), v, rg)
    }

    /// `x * row` with `row` of shape `[1, c]` repeated over rows.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let r = self.dims(x).0;
        let b = self.broadcast_rows(row, r);
        self.mul(x, b)
    }

    /// `x * col` with `col` of shape `[r, 1]` repeated over columns.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Var {
        let c = self.dims(x).1;
        let b = self.broadcast_cols(col, c);
        self.mul(x, b)
    }

    /// Value at the root after checking for recorded failures.
    pub fn evaluate(&self, root: Var) -> Result<Tensor> {
        self.check()?;
        Ok(self.nodes[root.0].value.clone())
    }
}
