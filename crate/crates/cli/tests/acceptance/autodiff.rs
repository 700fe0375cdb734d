//! Random smooth graphs checked against finite differences.

use qdot_core::diffcore::{Graph, Tensor, Var};
use qdot_core::rng::{self, Rng};
use rand::Rng as _;

use crate::{Outcome, Verdict};

const GRAPHS: u64 = 1000;
const STEP: f64 = 1e-3;
/// Denominator floor for the relative error of near-zero entries.
const FLOOR: f64 = 1e-4;
const FIRST_TOL: f64 = 1e-6;
const SECOND_TOL: f64 = 1e-5;
/// Candidate nodes whose values leave this range are discarded.
const VALUE_CAP: f64 = 20.0;

#[derive(Clone, Copy, Debug)]
enum Smooth {
    Softplus,
    Sigmoid,
    Tanh,
    Square,
    Exp,
    Log,
    Sqrt,
    Recip,
    Scale(f64),
    Shift(f64),
    Neg,
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(usize),
    Const(Tensor),
    Map(Smooth, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, bool, usize, bool),
    SumRows(usize),
    SumCols(usize),
    Mean(usize),
    BroadcastRows(usize, usize),
    BroadcastCols(usize, usize),
    BroadcastScalar(usize, usize, usize),
    Concat(usize, usize),
    Slice(usize, usize, usize),
    MulRow(usize, usize),
    MulCol(usize, usize),
    AddRow(usize, usize),
}

struct Program {
    nodes: Vec<Node>,
    leaves: Vec<Tensor>,
    /// Random weights contracting each node into the scalar root.
    weights: Vec<Tensor>,
    /// Weights of the scalar function applied to the first leaf's gradient.
    probe: Tensor,
}

fn apply_smooth(g: &mut Graph, f: Smooth, x: Var) -> Var {
    match f {
        Smooth::Softplus => g.softplus(x),
        Smooth::Sigmoid => g.sigmoid(x),
        Smooth::Tanh => g.tanh(x),
        Smooth::Square => g.square(x),
        Smooth::Exp => {
            let t = g.tanh(x);
            g.exp(t)
        }
        Smooth::Log => {
            let p = g.softplus(x);
            let p = g.add_scalar(p, 0.1);
            g.log(p)
        }
        Smooth::Sqrt => {
            let p = g.softplus(x);
            let p = g.add_scalar(p, 0.1);
            g.sqrt(p)
        }
        Smooth::Recip => {
            let p = g.square(x);
            let p = g.add_scalar(p, 1.0);
            g.recip(p)
        }
        Smooth::Scale(c) => g.scale(x, c),
        Smooth::Shift(c) => g.add_scalar(x, c),
        Smooth::Neg => g.neg(x),
    }
}

fn apply(g: &mut Graph, node: &Node, vars: &[Var], leaves: &[Var]) -> Var {
    match *node {
        Node::Leaf(i) => leaves[i],
        Node::Const(ref t) => g.constant(t.clone()),
        Node::Map(f, a) => apply_smooth(g, f, vars[a]),
        Node::Add(a, b) => g.add(vars[a], vars[b]),
        Node::Sub(a, b) => g.sub(vars[a], vars[b]),
        Node::Mul(a, b) => g.mul(vars[a], vars[b]),
        Node::MatMul(a, ta, b, tb) => g.matmul_t(vars[a], ta, vars[b], tb),
        Node::SumRows(a) => g.sum_rows(vars[a]),
        Node::SumCols(a) => g.sum_cols(vars[a]),
        Node::Mean(a) => g.mean(vars[a]),
        Node::BroadcastRows(a, n) => g.broadcast_rows(vars[a], n),
        Node::BroadcastCols(a, n) => g.broadcast_cols(vars[a], n),
        Node::BroadcastScalar(a, r, c) => g.broadcast_scalar(vars[a], r, c),
        Node::Concat(a, b) => g.concat(vars[a], vars[b]),
        Node::Slice(a, s, e) => g.slice_cols(vars[a], s, e),
        Node::MulRow(a, b) => g.mul_row(vars[a], vars[b]),
        Node::MulCol(a, b) => g.mul_col(vars[a], vars[b]),
        Node::AddRow(a, b) => g.add_row(vars[a], vars[b]),
    }
}

fn uniform(rng: &mut Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

fn shape(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

/// Propose a node over the current pool; `None` if the drawn operation does
/// not fit any available shapes.
fn propose(rng: &mut Rng, shapes: &[(usize, usize)], leaves: &mut Vec<Tensor>) -> Option<Node> {
    let n = shapes.len();
    let pick = |rng: &mut Rng| if rng.random_bool(0.5) { n - 1 } else { rng.random_range(0..n) };
    let a = pick(rng);
    let (r, c) = shapes[a];
    let find = |rng: &mut Rng, want: &dyn Fn((usize, usize)) -> bool| {
        let hits: Vec<usize> = (0..n).filter(|&i| want(shapes[i])).collect();
        (!hits.is_empty()).then(|| hits[rng.random_range(0..hits.len())])
    };
    let smooth = [
        Smooth::Softplus,
        Smooth::Sigmoid,
        Smooth::Tanh,
        Smooth::Square,
        Smooth::Exp,
        Smooth::Log,
        Smooth::Sqrt,
        Smooth::Recip,
        Smooth::Scale(rng.random_range(-2.0..2.0)),
        Smooth::Shift(rng.random_range(-1.0..1.0)),
        Smooth::Neg,
    ];
    match rng.random_range(0..15) {
        0..=3 => Some(Node::Map(smooth[rng.random_range(0..smooth.len())], a)),
        4..=6 => {
            // Same-shape partner: an existing node or a fresh leaf.
            let b = match find(rng, &|s| s == (r, c)) {
                Some(b) if b != a || rng.random_bool(0.3) => b,
                _ => {
                    if leaves.len() >= 5 {
                        return Some(Node::Const(uniform(rng, r, c)));
                    }
                    leaves.push(uniform(rng, r, c));
                    return Some(Node::Leaf(leaves.len() - 1));
                }
            };
            Some(match rng.random_range(0..3) {
                0 => Node::Add(a, b),
                1 => Node::Sub(a, b),
                _ => Node::Mul(a, b),
            })
        }
        7 => {
            let (ta, tb) = (rng.random_bool(0.3), rng.random_bool(0.3));
            let inner = if ta { r } else { c };
            let b = find(rng, &|(br, bc)| if tb { bc == inner } else { br == inner })?;
            Some(Node::MatMul(a, ta, b, tb))
        }
        8 => Some(match rng.random_range(0..3) {
            0 => Node::SumRows(a),
            1 => Node::SumCols(a),
            _ => Node::Mean(a),
        }),
        9 => Some(if r == 1 && c == 1 {
            Node::BroadcastScalar(a, rng.random_range(1..4), rng.random_range(1..4))
        } else if r == 1 {
            Node::BroadcastRows(a, rng.random_range(2..4))
        } else if c == 1 {
            Node::BroadcastCols(a, rng.random_range(2..4))
        } else {
            return None;
        }),
        10 => {
            let b = find(rng, &|(br, _)| br == r)?;
            Some(Node::Concat(a, b))
        }
        11 => {
            if c < 2 {
                return None;
            }
            let s = rng.random_range(0..c - 1);
            let e = rng.random_range(s + 1..=c);
            Some(Node::Slice(a, s, e))
        }
        12 => {
            let b = find(rng, &|s| s == (1, c))?;
            Some(Node::MulRow(a, b))
        }
        13 => {
            let b = find(rng, &|s| s == (r, 1))?;
            Some(Node::MulCol(a, b))
        }
        _ => {
            let b = find(rng, &|s| s == (1, c))?;
            Some(Node::AddRow(a, b))
        }
    }
}

fn generate(rng: &mut Rng) -> Program {
    let mut leaves: Vec<Tensor> = (0..rng.random_range(1..=3))
        .map(|_| {
            let (r, c) = (rng.random_range(1..=3), rng.random_range(1..=3));
            uniform(rng, r, c)
        })
        .collect();
    let mut nodes: Vec<Node> = (0..leaves.len()).map(Node::Leaf).collect();
    let target = nodes.len() + rng.random_range(4..=10);
    let mut attempts = 0;
    while nodes.len() < target && attempts < 200 {
        attempts += 1;
        let (g, _, vars) = build_nodes(&nodes, &leaves);
        let shapes: Vec<(usize, usize)> = vars.iter().map(|&v| shape(g.value(v))).collect();
        let Some(node) = propose(rng, &shapes, &mut leaves) else {
            continue;
        };
        let mut trial = nodes.clone();
        trial.push(node);
        let (g, _, vars) = build_nodes(&trial, &leaves);
        let value = g.value(*vars.last().expect("node"));
        if value.data().iter().all(|x| x.is_finite() && x.abs() <= VALUE_CAP) {
            nodes = trial;
        }
    }
    let (g, _, vars) = build_nodes(&nodes, &leaves);
    let weights = vars
        .iter()
        .map(|&v| {
            let (r, c) = shape(g.value(v));
            uniform(rng, r, c)
        })
        .collect();
    let (r0, c0) = shape(&leaves[0]);
    let probe = uniform(rng, r0, c0);
    Program { nodes, leaves, weights, probe }
}

fn build_nodes(nodes: &[Node], leaves: &[Tensor]) -> (Graph, Vec<Var>, Vec<Var>) {
    let mut g = Graph::new();
    let leaf_vars: Vec<Var> = leaves.iter().map(|t| g.variable(t.clone())).collect();
    let mut vars = Vec::with_capacity(nodes.len());
    for node in nodes {
        let v = apply(&mut g, node, &vars, &leaf_vars);
        vars.push(v);
    }
    (g, leaf_vars, vars)
}

/// The program with the scalar root attached.
fn build(p: &Program, leaves: &[Tensor]) -> (Graph, Vec<Var>, Var) {
    let (mut g, leaf_vars, vars) = build_nodes(&p.nodes, leaves);
    let mut root = None;
    for (v, w) in vars.iter().zip(&p.weights) {
        let w = g.constant(w.clone());
        let m = g.mul(*v, w);
        let s = g.sum(m);
        root = Some(match root {
            Some(r) => g.add(r, s),
            None => s,
        });
    }
    (g, leaf_vars, root.expect("nonempty program"))
}

fn root_value(p: &Program, leaves: &[Tensor]) -> Result<f64, String> {
    let (g, _, root) = build(p, leaves);
    g.evaluate(root).map(|t| t.item()).map_err(|e| e.to_string())
}

/// `sum(probe * tanh(d root / d leaf0))`, evaluated from first-order gradients.
fn inner_functional(p: &Program, leaves: &[Tensor]) -> Result<f64, String> {
    let (mut g, leaf_vars, root) = build(p, leaves);
    let grad = g.gradient(root, &leaf_vars[..1]).map_err(|e| e.to_string())?;
    Ok(grad[0].data().iter().zip(p.probe.data()).map(|(x, w)| w * x.tanh()).sum())
}

/// Five-point central difference of `f` along every leaf entry.
fn finite_differences(
    p: &Program,
    f: impl Fn(&Program, &[Tensor]) -> Result<f64, String>,
) -> Result<Vec<Vec<f64>>, String> {
    let mut out = Vec::with_capacity(p.leaves.len());
    for li in 0..p.leaves.len() {
        let mut grads = Vec::with_capacity(p.leaves[li].len());
        for e in 0..p.leaves[li].len() {
            let at = |delta: f64| {
                let mut leaves = p.leaves.clone();
                leaves[li].data_mut()[e] += delta;
                f(p, &leaves)
            };
            let d = (-at(2.0 * STEP)? + 8.0 * at(STEP)? - 8.0 * at(-STEP)? + at(-2.0 * STEP)?) / (12.0 * STEP);
            grads.push(d);
        }
        out.push(grads);
    }
    Ok(out)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

fn worst(analytic: &[Tensor], numeric: &[Vec<f64>]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(t, n)| t.data().iter().zip(n).map(|(&a, &b)| rel_err(a, b)))
        .fold(0.0, f64::max)
}

pub fn run() -> Outcome {
    let mut first_worst: f64 = 0.0;
    let mut second_worst: f64 = 0.0;
    let mut nodes = 0;
    for i in 0..GRAPHS {
        let mut rng = rng::indexed_stream(7, "acceptance-graphs", i);
        let p = generate(&mut rng);
        nodes += p.nodes.len();

        let (mut g, leaf_vars, root) = build(&p, &p.leaves);
        let first = g.gradient(root, &leaf_vars).map_err(|e| format!("graph {i}: {e}"))?;
        first_worst = first_worst.max(worst(&first, &finite_differences(&p, root_value)?));

        let (mut g, leaf_vars, root) = build(&p, &p.leaves);
        let probe = p.probe.clone();
        let second = g
            .higher_order_gradient(root, leaf_vars[0], &leaf_vars, |g, grad| {
                let t = g.tanh(grad);
                let w = g.constant(probe);
                let m = g.mul(t, w);
                g.sum(m)
            })
            .map_err(|e| format!("graph {i}: {e}"))?;
        second_worst = second_worst.max(worst(&second, &finite_differences(&p, inner_functional)?));
    }
    Ok(Verdict::new(
        first_worst < FIRST_TOL && second_worst < SECOND_TOL,
        format!(
            "{GRAPHS} graphs, {nodes} nodes; max rel err first={first_worst:.2e} (<{FIRST_TOL:.0e}), second={second_worst:.2e} (<{SECOND_TOL:.0e})"
        ),
    ))
}
