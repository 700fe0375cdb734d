use std::fmt::Write as _;

use super::{CheckpointBundle, LossBreakdown, TrainingConfig};
use crate::envs::{OfflineDataset, ReturnStats};
use crate::{Error, Result};

pub const METRICS_HEADER: &str =
    "step,loss_v,loss_q,obj_psi,loss_pi,w2_estimate,mean_advantage,eval_return_mean,eval_return_std";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub losses: LossBreakdown,
    pub eval: Option<ReturnStats>,
}

/// Result of a training run. On a numeric failure `bundle` is the state
/// after the last step that completed and `failure` says what went wrong.
#[derive(Debug)]
pub struct TrainRun {
    pub bundle: CheckpointBundle,
    pub metrics: Vec<MetricsRow>,
    pub failure: Option<Error>,
}

impl TrainRun {
    pub fn into_result(self) -> Result<(CheckpointBundle, Vec<MetricsRow>)> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok((self.bundle, self.metrics)),
        }
    }
}

/// Run `config.total_steps` updates from a fresh initialization.
pub fn train(dataset: &OfflineDataset, config: &TrainingConfig) -> Result<TrainRun> {
    let bundle = CheckpointBundle::for_dataset(config.clone(), dataset)?;
    continue_training(bundle, dataset, config.total_steps)
}

/// Advance an existing bundle until its step counter reaches `until`.
/// Losses are logged every `log_interval` steps; the policy is evaluated
/// every `eval_interval` steps and after the last one.
pub fn continue_training(mut bundle: CheckpointBundle, dataset: &OfflineDataset, until: u64) -> Result<TrainRun> {
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::contract("cannot train on an empty dataset"));
    }
    let cfg = bundle.config.clone();
    let env = bundle.env.clone().unwrap_or_else(|| dataset.env.clone());
    let mut metrics = Vec::new();
    while bundle.step < until {
        let losses = match bundle.sample_and_step(dataset) {
            Ok(l) => l,
            Err(e) => {
                return Ok(TrainRun {
                    bundle,
                    metrics,
                    failure: Some(e),
                })
            }
        };
        let step = losses.step;
        let eval_due = step == until || (cfg.eval_interval > 0 && step % cfg.eval_interval == 0);
        let eval = if eval_due {
            match bundle.evaluate(&env, cfg.eval_episodes, cfg.seed) {
                Ok(stats) => Some(stats),
                Err(e) => {
                    return Ok(TrainRun {
                        bundle,
                        metrics,
                        failure: Some(Error::Training { step, source: Box::new(e) }),
                    })
                }
            }
        } else {
            None
        };
        if eval.is_some() || step % cfg.log_interval == 0 {
            metrics.push(MetricsRow { losses, eval });
        }
    }
    Ok(TrainRun {
        bundle,
        metrics,
        failure: None,
    })
}

/// Metrics as CSV text, header included. Evaluation cells are empty on rows
/// without an evaluation.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let l = &r.losses;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},",
            l.step, l.v_loss, l.q_loss, l.psi_objective, l.pi_loss, l.w2_estimate, l.mean_advantage
        );
        if let Some(e) = r.eval {
            let _ = write!(out, "{},{}", e.mean, e.std);
        } else {
            out.push(',');
        }
        out.push('\n');
    }
    out
}
