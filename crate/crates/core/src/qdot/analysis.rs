use crate::diffcore::Tensor;
use crate::envs::{trajectory_returns, OfflineDataset};
use crate::nets::PicnnParams;
use crate::transport::displacement_norms;
use crate::Result;

/// How far the learned map moves the actions of one dataset trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTransport {
    pub trajectory_index: usize,
    pub cumulative_reward: f64,
    pub mean_transport_l2: f64,
}

pub fn trajectory_transport(dataset: &OfflineDataset, psi: &PicnnParams) -> Result<Vec<TrajectoryTransport>> {
    let states = Tensor::matrix(dataset.len(), dataset.obs_dim, dataset.observations.iter().map(|&x| f64::from(x)).collect())?;
    let actions = Tensor::matrix(dataset.len(), dataset.act_dim, dataset.actions.iter().map(|&x| f64::from(x)).collect())?;
    let norms = displacement_norms(psi, &states, &actions)?;
    Ok(trajectory_returns(dataset)
        .into_iter()
        .enumerate()
        .map(|(k, rec)| {
            let slice = &norms[rec.start..rec.start + rec.length];
            TrajectoryTransport {
                trajectory_index: k,
                cumulative_reward: rec.cumulative_reward,
                mean_transport_l2: slice.iter().sum::<f64>() / slice.len() as f64,
            }
        })
        .collect())
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation. NaN when either input is (nearly) constant or
/// there are fewer than two points.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let spread = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    if x.len() != y.len() || x.len() < 2 || spread(x) < 1e-9 || spread(y) < 1e-9 {
        return f64::NAN;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}
