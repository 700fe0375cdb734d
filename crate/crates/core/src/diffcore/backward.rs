//! Reverse accumulation. Every adjoint rule is itself recorded on the graph,
//! so gradients can be differentiated again.

use super::graph::{Graph, Op, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

impl Graph {
    /// Gradient nodes `d root / d wrt[i]`, recorded as differentiable
    /// subgraphs. Leaves that do not influence `root` get a zero constant.
    pub fn grad_vars(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        self.check()?;
        if self.value(root).dims() != Some((1, 1)) {
            return Err(Error::contract(format!(
                "gradient root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let n = root.0 + 1;
        let mut relevant = vec![false; n];
        for w in wrt {
            if w.0 < n {
                relevant[w.0] = true;
            }
        }
        for i in 0..n {
            if !relevant[i] {
                relevant[i] = self.nodes[i]
                    .op
                    .inputs()
                    .iter()
                    .flatten()
                    .any(|v| relevant[v.0]);
            }
        }

        let mut adjoint: Vec<Option<Var>> = vec![None; n];
        let seed = self.constant(Tensor::scalar(1.0));
        adjoint[root.0] = Some(seed);

        for i in (0..n).rev() {
            if !relevant[i] {
                continue;
            }
            let Some(gy) = adjoint[i] else { continue };
            let op = self.nodes[i].op.clone();
            let y = Var(i);
            let want = |v: Var| relevant[v.0];
            let mut contribs: Vec<(Var, Var)> = Vec::with_capacity(2);
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    if want(a) {
                        contribs.push((a, gy));
                    }
                    if want(b) {
                        contribs.push((b, gy));
                    }
                }
                Op::Sub(a, b) => {
                    if want(a) {
                        contribs.push((a, gy));
                    }
                    if want(b) {
                        let nb = self.neg(gy);
                        contribs.push((b, nb));
                    }
                }
                Op::Mul(a, b) => {
                    if want(a) {
                        let da = self.mul(gy, b);
                        contribs.push((a, da));
                    }
                    if want(b) {
                        let db = self.mul(gy, a);
                        contribs.push((b, db));
                    }
                }
                Op::Scale(a, c) => {
                    let da = self.scale(gy, c);
                    contribs.push((a, da));
                }
                Op::AddScalar(a, _) => contribs.push((a, gy)),
                Op::MatMul { a, b, ta, tb } => {
                    if want(a) {
                        // C = op(A) op(B)
                        let da = match (ta, tb) {
                            (false, false) => self.matmul_t(gy, false, b, true),
                            (false, true) => self.matmul_t(gy, false, b, false),
                            (true, false) => self.matmul_t(b, false, gy, true),
                            (true, true) => self.matmul_t(b, true, gy, true),
                        };
                        contribs.push((a, da));
                    }
                    if want(b) {
                        let db = match (ta, tb) {
                            (false, false) => self.matmul_t(a, true, gy, false),
                            (false, true) => self.matmul_t(gy, true, a, false),
                            (true, false) => self.matmul_t(a, false, gy, false),
                            (true, true) => self.matmul_t(gy, true, a, true),
                        };
                        contribs.push((b, db));
                    }
                }
                Op::AddRow(x, row) => {
                    if want(x) {
                        contribs.push((x, gy));
                    }
                    if want(row) {
                        let d = self.sum_rows(gy);
                        contribs.push((row, d));
                    }
                }
                Op::BroadcastRows(x, _) => {
                    let d = self.sum_rows(gy);
                    contribs.push((x, d));
                }
                Op::SumRows(x) => {
                    let r = self.value(x).rows();
                    let d = self.broadcast_rows(gy, r);
                    contribs.push((x, d));
                }
                Op::BroadcastCols(x, _) => {
                    let d = self.sum_cols(gy);
                    contribs.push((x, d));
                }
                Op::SumCols(x) => {
                    let c = self.value(x).cols();
                    let d = self.broadcast_cols(gy, c);
                    contribs.push((x, d));
                }
                Op::BroadcastScalar(x, _, _) => {
                    let d = self.sum(gy);
                    contribs.push((x, d));
                }
                Op::Sum(x) => {
                    let (r, c) = self.value(x).dims().expect("rank 2");
                    let d = self.broadcast_scalar(gy, r, c);
                    contribs.push((x, d));
                }
                Op::Mean(x) => {
                    let (r, c) = self.value(x).dims().expect("rank 2");
                    let d = self.broadcast_scalar(gy, r, c);
                    let d = self.scale(d, 1.0 / (r * c) as f64);
                    contribs.push((x, d));
                }
                Op::Relu(x) => {
                    // derivative at exactly 0 is 0
                    let mask = self.value(x).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    let m = self.constant(mask);
                    let d = self.mul(gy, m);
                    contribs.push((x, d));
                }
                Op::Clamp(x, lo, hi) => {
                    let mask = self
                        .value(x)
                        .map(|v| if v > lo && v < hi { 1.0 } else { 0.0 });
                    let m = self.constant(mask);
                    let d = self.mul(gy, m);
                    contribs.push((x, d));
                }
                Op::Softplus(x) => {
                    let s = self.sigmoid(x);
                    let d = self.mul(gy, s);
                    contribs.push((x, d));
                }
                Op::Sigmoid(x) => {
                    // s (1 - s) = s - s^2
                    let s2 = self.square(y);
                    let ds = self.sub(y, s2);
                    let d = self.mul(gy, ds);
                    contribs.push((x, d));
                }
                Op::Tanh(x) => {
                    let t2 = self.square(y);
                    let gt2 = self.mul(gy, t2);
                    let d = self.sub(gy, gt2);
                    contribs.push((x, d));
                }
                Op::Exp(x) => {
                    let d = self.mul(gy, y);
                    contribs.push((x, d));
                }
                Op::Log(x) => {
                    let r = self.recip(x);
                    let d = self.mul(gy, r);
                    contribs.push((x, d));
                }
                Op::Recip(x) => {
                    let y2 = self.square(y);
                    let d = self.mul(gy, y2);
                    let d = self.neg(d);
                    contribs.push((x, d));
                }
                Op::Square(x) => {
                    let d = self.mul(gy, x);
                    let d = self.scale(d, 2.0);
                    contribs.push((x, d));
                }
                Op::Sqrt(x) => {
                    let r = self.recip(y);
                    let d = self.mul(gy, r);
                    let d = self.scale(d, 0.5);
                    contribs.push((x, d));
                }
                Op::Concat(a, b) => {
                    let ac = self.value(a).cols();
                    let total = self.value(y).cols();
                    if want(a) {
                        let d = self.slice_cols(gy, 0, ac);
                        contribs.push((a, d));
                    }
                    if want(b) {
                        let d = self.slice_cols(gy, ac, total);
                        contribs.push((b, d));
                    }
                }
                Op::SliceCols(x, start, _) => {
                    let total = self.value(x).cols();
                    let d = self.pad_cols(gy, start, total);
                    contribs.push((x, d));
                }
                Op::PadCols(x, start, _) => {
                    let c = self.value(x).cols();
                    let d = self.slice_cols(gy, start, start + c);
                    contribs.push((x, d));
                }
            }
            for (target, d) in contribs {
                if !relevant[target.0] {
                    continue;
                }
                adjoint[target.0] = Some(match adjoint[target.0] {
                    Some(prev) => self.add(prev, d),
                    None => d,
                });
            }
        }
        self.check()?;

        let out = wrt
            .iter()
            .map(|w| match adjoint.get(w.0).copied().flatten() {
                Some(v) => v,
                None => {
                    let (r, c) = self.value(*w).dims().expect("rank 2");
                    self.constant(Tensor::zeros(r, c))
                }
            })
            .collect();
        Ok(out)
    }

    /// `d root / d wrt[i]` by reverse accumulation.
    pub fn gradient(&mut self, root: Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        let vars = self.grad_vars(root, wrt)?;
        Ok(vars.iter().map(|v| self.value(*v).clone()).collect())
    }

    /// Gradient w.r.t. `outer` of `f(d root / d inner)`, where `f` builds an
    /// arbitrary scalar function of the inner gradient on this graph.
    pub fn higher_order_gradient<F>(
        &mut self,
        root: Var,
        inner: Var,
        outer: &[Var],
        f: F,
    ) -> Result<Vec<Tensor>>
    where
        F: FnOnce(&mut Graph, Var) -> Var,
    {
        let inner_grad = self.grad_vars(root, &[inner])?[0];
        let h = f(self, inner_grad);
        self.gradient(h, outer)
    }
}
