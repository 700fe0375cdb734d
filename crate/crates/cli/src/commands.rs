use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use qdot_core::diffcore::Tensor;
use qdot_core::envs::{generate_dataset, trajectory_returns, MixtureSpec, OfflineDataset};
use qdot_core::qdot::{
    metrics_csv, spearman, train as run_training, trajectory_transport, Algorithm, CheckpointBundle, TrainRun,
};
use qdot_core::transport::brenier_w2_estimate;

use crate::config::RunConfig;
use crate::{CliError, Common};

fn base_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    Ok(cfg)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(format!("cannot create {}: {e}", path.display())))
}

fn load_dataset(path: &str) -> Result<OfflineDataset, CliError> {
    OfflineDataset::load(path).map_err(|e| CliError::io(format!("dataset {path}: {e}")))
}

fn load_checkpoint(path: &str) -> Result<CheckpointBundle, CliError> {
    CheckpointBundle::load(path).map_err(|e| CliError::io(format!("checkpoint {path}: {e}")))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        x.to_string()
    }
}

#[derive(Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    /// point-mass or bandit.
    #[arg(long)]
    env: Option<String>,
    /// Comma-separated kind:fraction pairs (random, mediocre, expert, behavior).
    #[arg(long)]
    mix: Option<String>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn gen_data(a: GenDataArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.common)?;
    cfg.set_opt("env", a.env)?;
    cfg.set_opt("mix", a.mix)?;
    cfg.set_opt("trajectories", a.trajectories)?;
    cfg.set_opt("seed", a.seed)?;
    cfg.set_opt("out", a.out.map(|p| p.display().to_string()))?;
    let out = PathBuf::from(cfg.require("out")?);
    let env = cfg.env()?;
    let mut mix: MixtureSpec = cfg.require("mix")?.parse()?;
    mix.expert_noise = cfg.parse_or("expert_noise", mix.expert_noise)?;
    mix.mediocre_noise = cfg.parse_or("mediocre_noise", mix.mediocre_noise)?;
    let n: usize = cfg.parse_or("trajectories", 100)?;
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let ds = generate_dataset(&env, &mix, n, seed)?;
    write(&out, ds.to_bytes()?)?;
    let mut returns: Vec<f64> = trajectory_returns(&ds).iter().map(|r| r.cumulative_reward).collect();
    returns.sort_by(f64::total_cmp);
    let qs: Vec<String> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&q| format!("{:.4}", quantile(&returns, q)))
        .collect();
    println!(
        "wrote {}: {} transitions, {} trajectories, return quantiles (min,q25,median,q75,max) = {}",
        out.display(),
        ds.len(),
        ds.num_trajectories(),
        qs.join(",")
    );
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// qdot, bc, iql or advw.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    total_steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Files written by one training run.
pub struct RunFiles {
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub config: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        RunFiles {
            metrics: dir.join("metrics.csv"),
            checkpoint: dir.join("checkpoint.qdck"),
            config: dir.join("resolved.cfg"),
        }
    }
}

/// Train and write metrics, checkpoint and resolved config into `dir`. The
/// checkpoint is written even when training stops on a numeric failure.
fn train_into(cfg: &RunConfig, ds: &OfflineDataset, dir: &Path) -> Result<TrainRun, CliError> {
    let tc = cfg.training_config()?;
    create_dir(dir)?;
    let files = RunFiles::in_dir(dir);
    write(&files.config, cfg.resolved(&tc).to_text())?;
    let run = run_training(ds, &tc)?;
    write(&files.metrics, metrics_csv(&run.metrics))?;
    write(&files.checkpoint, run.bundle.to_bytes()?)?;
    Ok(run)
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.common)?;
    cfg.set_opt("dataset", a.dataset.map(|p| p.display().to_string()))?;
    cfg.set_opt("out_dir", a.out_dir.map(|p| p.display().to_string()))?;
    cfg.set_opt("algorithm", a.algorithm)?;
    cfg.set_opt("alpha", a.alpha)?;
    cfg.set_opt("beta", a.beta)?;
    cfg.set_opt("total_steps", a.total_steps)?;
    cfg.set_opt("seed", a.seed)?;
    let out_dir = PathBuf::from(cfg.require("out_dir")?);
    cfg.training_config()?;
    let ds = load_dataset(cfg.require("dataset")?)?;
    let run = train_into(&cfg, &ds, &out_dir)?;
    if let Some(e) = run.failure {
        return Err(e.into());
    }
    match run.metrics.last().and_then(|r| r.eval) {
        Some(ev) => println!(
            "trained {} steps; final return {} (std {})",
            run.bundle.step,
            fmt_f64(ev.mean),
            fmt_f64(ev.std)
        ),
        None => println!("trained {} steps", run.bundle.step),
    }
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV file for the result.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.common)?;
    cfg.set_opt("checkpoint", a.checkpoint.map(|p| p.display().to_string()))?;
    cfg.set_opt("episodes", a.episodes)?;
    cfg.set_opt("seed", a.seed)?;
    cfg.set_opt("out", a.out.map(|p| p.display().to_string()))?;
    let episodes: usize = cfg.parse_or("episodes", 10)?;
    if episodes == 0 {
        return Err(CliError::usage("--episodes must be at least 1"));
    }
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let bundle = load_checkpoint(cfg.require("checkpoint")?)?;
    let env = bundle
        .env
        .clone()
        .ok_or_else(|| CliError::usage("checkpoint does not record its environment"))?;
    let stats = bundle.evaluate(&env, episodes, seed)?;
    println!("return_mean={} return_std={}", fmt_f64(stats.mean), fmt_f64(stats.std));
    if let Some(out) = cfg.get("out") {
        let text = format!(
            "episodes,seed,return_mean,return_std\n{episodes},{seed},{},{}\n",
            fmt_f64(stats.mean),
            fmt_f64(stats.std)
        );
        write(Path::new(out), text)?;
    }
    Ok(())
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Comma-separated alpha grid, e.g. 1,20,400.
    #[arg(long)]
    alphas: Option<String>,
    /// Comma-separated seeds shared by every alpha.
    #[arg(long)]
    seeds: Option<String>,
}

fn parse_list<T: std::str::FromStr>(key: &str, text: &str) -> Result<Vec<T>, CliError> {
    let items: Result<Vec<T>, _> = text.split(',').map(|s| s.trim().parse::<T>()).collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(CliError::usage(format!("malformed {key} list {text:?}"))),
    }
}

fn dataset_tensors(ds: &OfflineDataset) -> Result<(Tensor, Tensor), CliError> {
    let widen = |xs: &[f32]| xs.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
    Ok((
        Tensor::matrix(ds.len(), ds.obs_dim, widen(&ds.observations))?,
        Tensor::matrix(ds.len(), ds.act_dim, widen(&ds.actions))?,
    ))
}

fn worker_count() -> usize {
    std::env::var("QDOT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

pub fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.common)?;
    cfg.set_opt("dataset", a.dataset.map(|p| p.display().to_string()))?;
    cfg.set_opt("out_dir", a.out_dir.map(|p| p.display().to_string()))?;
    cfg.set_opt("alphas", a.alphas)?;
    cfg.set_opt("seeds", a.seeds)?;
    let alphas: Vec<f64> = parse_list("alphas", cfg.require("alphas")?)?;
    if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(CliError::usage("alphas must be finite and nonnegative"));
    }
    let default_seed = cfg.parse_or("seed", 0u64)?.to_string();
    let seeds: Vec<u64> = parse_list("seeds", cfg.get("seeds").unwrap_or(&default_seed))?;
    let out_dir = PathBuf::from(cfg.require("out_dir")?);
    cfg.training_config()?;
    let ds = load_dataset(cfg.require("dataset")?)?;
    let (states, actions) = dataset_tensors(&ds)?;
    create_dir(&out_dir)?;

    let jobs: Vec<(f64, u64)> = alphas.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let results: Vec<Mutex<Option<(f64, f64)>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let run_job = |i: usize| -> Result<(f64, f64), CliError> {
        let (alpha, seed) = jobs[i];
        let mut c = cfg.clone();
        c.set("alpha", &alpha.to_string())?;
        c.set("seed", &seed.to_string())?;
        let dir = out_dir.join(format!("alpha_{alpha}_seed_{seed}"));
        let run = train_into(&c, &ds, &dir)?;
        if let Some(e) = run.failure {
            return Err(e.into());
        }
        let ret = run.metrics.last().and_then(|r| r.eval).map_or(f64::NAN, |e| e.mean);
        let w2 = brenier_w2_estimate(&run.bundle.psi, &states, &actions)?;
        Ok((ret, w2))
    };
    std::thread::scope(|scope| {
        for _ in 0..worker_count().min(jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let out = match run_job(i) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        eprintln!("run alpha={} seed={} failed: {}", jobs[i].0, jobs[i].1, e.message);
                        None
                    }
                };
                *results[i].lock().expect("result slot") = out;
            });
        }
    });

    let mut csv = String::from("alpha,seed,final_return,final_w2\n");
    let mut ok = 0;
    for ((alpha, seed), slot) in jobs.iter().zip(&results) {
        let (ret, w2) = slot.lock().expect("result slot").unwrap_or((f64::NAN, f64::NAN));
        if !w2.is_nan() {
            ok += 1;
        }
        csv.push_str(&format!("{alpha},{seed},{},{}\n", fmt_f64(ret), fmt_f64(w2)));
    }
    write(&out_dir.join("sweep.csv"), csv)?;
    println!("sweep finished: {ok}/{} runs succeeded", jobs.len());
    if ok == 0 {
        return Err(CliError { code: 4, message: "every sweep run failed".into() });
    }
    Ok(())
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

pub fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let mut cfg = base_config(&a.common)?;
    cfg.set_opt("dataset", a.dataset.map(|p| p.display().to_string()))?;
    cfg.set_opt("checkpoint", a.checkpoint.map(|p| p.display().to_string()))?;
    cfg.set_opt("out_dir", a.out_dir.map(|p| p.display().to_string()))?;
    let out_dir = PathBuf::from(cfg.get("out_dir").unwrap_or("."));
    let bundle = load_checkpoint(cfg.require("checkpoint")?)?;
    if bundle.config.algorithm != Algorithm::Qdot {
        return Err(CliError::usage(format!(
            "analysis needs a qdot checkpoint, got {}",
            bundle.config.algorithm
        )));
    }
    let ds = load_dataset(cfg.require("dataset")?)?;
    let rows = trajectory_transport(&ds, &bundle.psi)?;
    let mut csv = String::from("trajectory_index,cumulative_reward,mean_transport_l2\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.trajectory_index, r.cumulative_reward, r.mean_transport_l2));
    }
    create_dir(&out_dir)?;
    write(&out_dir.join("analysis.csv"), csv)?;
    let x: Vec<f64> = rows.iter().map(|r| r.cumulative_reward).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean_transport_l2).collect();
    println!("spearman={}", fmt_f64(spearman(&x, &y)));
    Ok(())
}
