//! Squared-Wasserstein estimation through a learned convex potential, plus
//! exact discrete optimal transport used as a reference.

mod assignment;

pub use assignment::min_cost_assignment;

use crate::diffcore::Tensor;
use crate::nets::PicnnParams;
use crate::{Error, Result};

/// Largest instance accepted by [`exact_discrete_ot`].
pub const MAX_OT_POINTS: usize = 256;

/// Uniformly weighted point cloud, one point per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalDistribution {
    points: Tensor,
}

impl EmpiricalDistribution {
    pub fn new(points: Tensor) -> Result<Self> {
        if points.shape().len() != 2 || points.rows() == 0 || points.cols() == 0 {
            return Err(Error::contract(format!("support must be a nonempty matrix, got shape {:?}", points.shape())));
        }
        if !points.is_finite() {
            return Err(Error::contract("support points must be finite"));
        }
        Ok(EmpiricalDistribution { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        EmpiricalDistribution::new(Tensor::from_rows(rows)?)
    }

    pub fn points(&self) -> &Tensor {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }
}

/// Coupling between two equally sized point clouds.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteCoupling {
    pub source: Tensor,
    pub target: Tensor,
    /// `[n, n]`, rows and columns each summing to `1/n`.
    pub plan: Tensor,
    /// Source `i` is sent to target `assignment[i]`.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Exact empirical W2^2 between uniform clouds of equal size, solved as an
/// assignment problem.
pub fn exact_discrete_ot(source: &EmpiricalDistribution, target: &EmpiricalDistribution) -> Result<DiscreteCoupling> {
    let n = source.len();
    if target.len() != n || target.dim() != source.dim() {
        return Err(Error::contract(format!(
            "point clouds differ: {}x{} vs {}x{}",
            n,
            source.dim(),
            target.len(),
            target.dim()
        )));
    }
    if n > MAX_OT_POINTS {
        return Err(Error::SizeLimit(format!("{n} points exceeds the exact solver limit of {MAX_OT_POINTS}")));
    }
    let (x, y) = (source.points(), target.points());
    let mut cost = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            cost.push(sq_dist(x.row_slice(i), y.row_slice(j)));
        }
    }
    let assignment = min_cost_assignment(&cost, n);
    let w = 1.0 / n as f64;
    let mut plan = vec![0.0; n * n];
    let mut total = 0.0;
    for (i, &j) in assignment.iter().enumerate() {
        plan[i * n + j] = w;
        total += cost[i * n + j];
    }
    Ok(DiscreteCoupling {
        source: x.clone(),
        target: y.clone(),
        plan: Tensor::matrix(n, n, plan)?,
        assignment,
        total_cost: total * w,
    })
}

/// W2^2 between isotropic Gaussians `N(m1, s1^2 I)` and `N(m2, s2^2 I)`.
pub fn gaussian_w2_closed_form(m1: &[f64], s1: f64, m2: &[f64], s2: f64) -> Result<f64> {
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(Error::contract("standard deviations must be positive"));
    }
    if m1.len() != m2.len() {
        return Err(Error::contract("means have different dimensions"));
    }
    Ok(sq_dist(m1, m2) + m1.len() as f64 * (s1 - s2).powi(2))
}

fn check_batch(psi: &PicnnParams, states: &Tensor, actions: &Tensor) -> Result<()> {
    if states.rows() != actions.rows() {
        return Err(Error::contract(format!("{} states but {} actions", states.rows(), actions.rows())));
    }
    if states.cols() != psi.state_dim || actions.cols() != psi.action_dim {
        return Err(Error::contract("batch widths do not match the potential"));
    }
    Ok(())
}

/// Row `i` is `grad_a psi(s_i, a_i)`. No clipping.
pub fn transport_actions(psi: &PicnnParams, states: &Tensor, actions: &Tensor) -> Result<Tensor> {
    check_batch(psi, states, actions)?;
    psi.action_gradient_batch(states, actions)
}

/// Per-row Euclidean displacement `|a_i - grad_a psi(s_i, a_i)|`.
pub fn displacement_norms(psi: &PicnnParams, states: &Tensor, actions: &Tensor) -> Result<Vec<f64>> {
    let moved = transport_actions(psi, states, actions)?;
    Ok((0..actions.rows())
        .map(|i| sq_dist(actions.row_slice(i), moved.row_slice(i)).sqrt())
        .collect())
}

/// Brenier-form estimate `mean_i |a_i - grad_a psi(s_i, a_i)|^2`.
pub fn brenier_w2_estimate(psi: &PicnnParams, states: &Tensor, actions: &Tensor) -> Result<f64> {
    if actions.rows() == 0 {
        return Err(Error::contract("empty batch"));
    }
    let d = displacement_norms(psi, states, actions)?;
    Ok(d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64)
}
