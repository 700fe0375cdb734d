use std::path::Path;
use std::process::{Command, Output};

use qdot_core::diffcore::Tensor;
use qdot_core::envs::{Env, OfflineDataset, QuadraticBanditEnv};
use qdot_core::qdot::{Algorithm, TrainingConfig};

/// Desk-scale training settings shared by the learning criteria.
pub fn config(algorithm: Algorithm, alpha: f64, seed: u64, steps: u64) -> TrainingConfig {
    TrainingConfig {
        algorithm,
        alpha,
        seed,
        total_steps: steps,
        hidden_units: 32,
        batch_size: 64,
        eval_interval: steps.max(1),
        log_interval: 1000,
        ..TrainingConfig::default()
    }
}

pub fn bandit(mu_gain: f64, mu_bias: f64) -> Env {
    Env::Bandit(QuadraticBanditEnv {
        mu_gain,
        mu_bias,
        ..QuadraticBanditEnv::default()
    })
}

/// Every observation and action of a dataset as `[n, k]` and `[n, d]`.
pub fn dataset_tensors(ds: &OfflineDataset) -> (Tensor, Tensor) {
    let n = ds.len();
    let s: Vec<f64> = (0..n).flat_map(|i| ds.observation(i)).collect();
    let a: Vec<f64> = (0..n).flat_map(|i| ds.action(i)).collect();
    (
        Tensor::matrix(n, ds.obs_dim, s).expect("observation matrix"),
        Tensor::matrix(n, ds.act_dim, a).expect("action matrix"),
    )
}

pub fn qdot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdot"))
        .args(args)
        .env("QDOT_THREADS", "1")
        .output()
        .expect("spawn qdot")
}

/// Run the binary and insist on success.
pub fn qdot_ok(args: &[&str]) -> Result<String, String> {
    let out = qdot(args);
    if !out.status.success() {
        return Err(format!(
            "qdot {} exited with {:?}: {}",
            args.first().unwrap_or(&""),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

pub fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Parse a CSV with a header row into rows of named string fields.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty csv")?.split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    Ok((header, rows))
}

pub fn column(header: &[String], name: &str) -> Result<usize, String> {
    header.iter().position(|h| h == name).ok_or(format!("missing column {name}"))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
