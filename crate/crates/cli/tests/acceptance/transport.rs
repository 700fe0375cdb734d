//! Transport-map criteria on the quadratic bandit.

use qdot_core::diffcore::{Adam, Graph, Tensor, Var};
use qdot_core::envs::{generate_dataset, Batch, Env, MixtureSpec, OfflineDataset, PolicyKind, QuadraticBanditEnv};
use qdot_core::nets::{MlpParams, Parameters, PicnnParams};
use qdot_core::qdot::{
    continue_training, train, v_loss, Algorithm, BatchVars, CheckpointBundle, Critic, FrozenCritic, TrainingConfig,
};
use qdot_core::rng::{self, Rng};
use qdot_core::transport::{brenier_w2_estimate, displacement_norms, exact_discrete_ot, transport_actions, EmpiricalDistribution};
use rand::Rng as _;

use crate::common::{bandit, column, config, dataset_tensors, path_str, qdot_ok, read_csv};
use crate::{Outcome, Verdict};

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn behavior_dataset(env: &Env, n: usize, seed: u64) -> Result<OfflineDataset, String> {
    generate_dataset(env, &MixtureSpec::pure(PolicyKind::Behavior), n, seed).map_err(err)
}

/// Largest `psi(mid) - (psi(a1) + psi(a2)) / 2` over random midpoint probes.
fn midpoint_violation(psi: &PicnnParams, rng: &mut Rng, probes: usize) -> Result<f64, String> {
    let (k, d) = (psi.state_dim, psi.action_dim);
    let draw = |rng: &mut Rng, cols: usize, half: f64| {
        let v = (0..probes * cols).map(|_| rng.random_range(-half..half)).collect();
        Tensor::matrix(probes, cols, v).expect("probe matrix")
    };
    let s = draw(rng, k, 1.0);
    let a1 = draw(rng, d, 2.0);
    let a2 = draw(rng, d, 2.0);
    let mid = a1.zip_map(&a2, |x, y| 0.5 * (x + y));
    let f1 = psi.forward_batch(&s, &a1).map_err(err)?;
    let f2 = psi.forward_batch(&s, &a2).map_err(err)?;
    let fm = psi.forward_batch(&s, &mid).map_err(err)?;
    Ok((0..probes)
        .map(|i| fm.data()[i] - 0.5 * (f1.data()[i] + f2.data()[i]))
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn convexity() -> Outcome {
    let env = Env::Bandit(QuadraticBanditEnv::default());
    let ds = behavior_dataset(&env, 2000, 0)?;
    let cfg = config(Algorithm::Qdot, 1.0, 0, 10_000);
    let mut bundle = CheckpointBundle::for_dataset(cfg, &ds).map_err(err)?;
    let mut rng = rng::stream(0, "acceptance-convexity");
    let mut worst = f64::NEG_INFINITY;
    let mut checkpoints = 0;
    while bundle.step < 10_000 {
        bundle.sample_and_step(&ds).map_err(err)?;
        bundle.psi.check_convexity().map_err(err)?;
        if bundle.step % 1000 == 0 {
            worst = worst.max(midpoint_violation(&bundle.psi, &mut rng, 1000)?);
            checkpoints += 1;
        }
    }
    Ok(Verdict::new(
        worst <= 1e-9,
        format!("{checkpoints} checkpoints x 1000 probes, max violation {worst:.2e} (<=1e-9)"),
    ))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

/// `E[g(clip(X, -1, 1))]` for `X ~ N(mean, std^2)`, including the point
/// masses the clip puts on the bounds.
fn clipped_normal_expectation(mean: f64, std: f64, g: impl Fn(f64) -> f64) -> f64 {
    let pdf = |x: f64| (-0.5 * ((x - mean) / std).powi(2)).exp() / (std * (2.0 * std::f64::consts::PI).sqrt());
    let far = 40.0 * std;
    let upper = simpson(pdf, 1.0, (mean + far).max(1.0), 20_000);
    let lower = simpson(pdf, (mean - far).min(-1.0), -1.0, 20_000);
    simpson(|x| pdf(x) * g(x), -1.0, 1.0, 20_000) + upper * g(1.0) + lower * g(-1.0)
}

/// Train only the transport map under a frozen quadratic critic.
fn frozen_run(env: &Env, gain: f64, bias: f64, seed: u64, steps: u64, hidden: usize) -> Result<(OfflineDataset, PicnnParams), String> {
    let ds = behavior_dataset(env, 4000, seed)?;
    let cfg = TrainingConfig {
        frozen_critic: Some(FrozenCritic::Quadratic { gain, bias }),
        batch_size: 256,
        learning_rate: 1e-3,
        hidden_units: hidden,
        ..config(Algorithm::Qdot, 1.0, seed, steps)
    };
    let (bundle, _) = train(&ds, &cfg).map_err(err)?.into_result().map_err(err)?;
    Ok((ds, bundle.psi))
}

pub fn brenier_vs_exact() -> Outcome {
    let alpha = 1.0;
    let env = bandit(0.0, 0.0);
    let (ds, psi) = frozen_run(&env, 0.0, 0.0, 3, 3000, 32)?;
    let (states, actions) = dataset_tensors(&ds);
    let estimate = brenier_w2_estimate(&psi, &states, &actions).map_err(err)?;
    let analytic = clipped_normal_expectation(0.4, 0.2, |a| (a - (0.0 + alpha * a) / (1.0 + alpha)).powi(2));
    let rel = (estimate - analytic).abs() / analytic;

    let mut rng = rng::stream(3, "acceptance-ot-batches");
    let mut worst_gap = f64::INFINITY;
    for _ in 0..10 {
        let idx: Vec<usize> = (0..256).map(|_| rng.random_range(0..ds.len())).collect();
        let b = ds.batch(&idx).map_err(err)?;
        let moved = transport_actions(&psi, &b.observations, &b.actions).map_err(err)?;
        let induced = brenier_w2_estimate(&psi, &b.observations, &b.actions).map_err(err)?;
        let exact = exact_discrete_ot(
            &EmpiricalDistribution::new(b.actions.clone()).map_err(err)?,
            &EmpiricalDistribution::new(moved).map_err(err)?,
        )
        .map_err(err)?;
        worst_gap = worst_gap.min(induced - exact.total_cost);
    }
    Ok(Verdict::new(
        rel < 0.1 && worst_gap >= -1e-6,
        format!(
            "estimate {estimate:.5} vs quadrature {analytic:.5} (rel {rel:.3} < 0.1); min induced-exact gap {worst_gap:.2e} over 10x256 (>= -1e-6)"
        ),
    ))
}

pub fn pointwise_optimum() -> Outcome {
    let (alpha, gain, bias) = (1.0, 0.5, 0.1);
    let env = bandit(gain, bias);
    let (ds, psi) = frozen_run(&env, gain, bias, 4, 3000, 64)?;
    let (states, actions) = dataset_tensors(&ds);
    let moved = transport_actions(&psi, &states, &actions).map_err(err)?;
    // Grid search for argmax_y Q(s, y) - alpha (a - y)^2 with Q = -(y - mu(s))^2.
    let grid: Vec<f64> = (0..=40_000).map(|i| -2.0 + i as f64 * 1e-4).collect();
    let mut total = 0.0;
    for i in 0..ds.len() {
        let (s, a) = (states.data()[i], actions.data()[i]);
        let mu = gain * s + bias;
        let best = grid
            .iter()
            .copied()
            .max_by(|&x, &y| {
                let f = |y: f64| -(y - mu).powi(2) - alpha * (a - y).powi(2);
                f(x).total_cmp(&f(y))
            })
            .expect("grid");
        total += (moved.data()[i] - best).abs();
    }
    let mae = total / ds.len() as f64;
    Ok(Verdict::new(
        mae < 0.05,
        format!("MAE {mae:.4} over {} actions, mu(s) = {gain}s + {bias} (< 0.05)", ds.len()),
    ))
}

/// Critic whose value is the (scalar) action itself, so targets can be fed
/// through the action column.
struct ActionValue;

impl Critic for ActionValue {
    fn q_graph(&self, _g: &mut Graph, _s: Var, a: Var) -> qdot_core::Result<Var> {
        Ok(a)
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-12 {
        let (x1, x2) = (hi - r * (hi - lo), lo + r * (hi - lo));
        if f(x1) < f(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    0.5 * (lo + hi)
}

pub fn expectile_fixed_point() -> Outcome {
    let n = 1000;
    let targets: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
    let batch = Batch {
        observations: Tensor::zeros(n, 1),
        actions: Tensor::matrix(n, 1, targets.clone()).map_err(err)?,
        rewards: Tensor::zeros(n, 1),
        next_observations: Tensor::zeros(n, 1),
        not_done: Tensor::filled(n, 1, 1.0),
    };
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for tau in [0.5, 0.7, 0.9] {
        let oracle = golden_min(
            |v| {
                targets
                    .iter()
                    .map(|y| {
                        let u = y - v;
                        let w = if u < 0.0 { 1.0 - tau } else { tau };
                        w * u * u
                    })
                    .sum::<f64>()
            },
            -1.0,
            2.0,
        );
        let mut r = rng::stream(5, "acceptance-expectile");
        let mut v = MlpParams::new(&mut r, 1, 16, 1);
        let mut opt = Adam::new(v.tensors(), 1e-2);
        for _ in 0..2000 {
            let mut g = Graph::new();
            let b = BatchVars::record(&mut g, &batch);
            let bound = v.bind(&mut g, true);
            let loss = v_loss(&mut g, &bound, &ActionValue, &b, tau).map_err(err)?;
            let grads = g.gradient(loss, &bound.vars()).map_err(err)?;
            opt.step(v.tensors_mut(), &grads).map_err(err)?;
        }
        let fitted = qdot_core::nets::mlp_forward(&v, &Tensor::zeros(1, 1)).map_err(err)?.item();
        worst = worst.max((fitted - tau).abs()).max((oracle - tau).abs());
        parts.push(format!("tau={tau}: v={fitted:.4} oracle={oracle:.4}"));
    }
    Ok(Verdict::new(worst <= 0.02, format!("{}; max |v - tau| {worst:.4} (<= 0.02)", parts.join(", "))))
}

pub fn alpha_monotonicity() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let data = dir.path().join("bandit.qdds");
    let out = dir.path().join("sweep");
    qdot_ok(&[
        "gen-data", "--env", "bandit", "--mix", "behavior:1", "--trajectories", "2000", "--seed", "0", "--out",
        &path_str(&data),
    ])?;
    qdot_ok(&[
        "sweep", "--dataset", &path_str(&data), "--out-dir", &path_str(&out), "--alphas", "1,20,400", "--seeds",
        "0,1,2", "--set", "hidden_units=32", "--set", "batch_size=64", "--set", "total_steps=5000", "--set",
        "eval_interval=5000", "--set", "log_interval=1000",
    ])?;
    let (header, rows) = read_csv(&out.join("sweep.csv"))?;
    let (ca, cs, cw) = (column(&header, "alpha")?, column(&header, "seed")?, column(&header, "final_w2")?);
    let ds = OfflineDataset::load(&data).map_err(err)?;
    let (states, actions) = dataset_tensors(&ds);
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in ["0", "1", "2"] {
        let mut w2s = Vec::new();
        for alpha in ["1", "20", "400"] {
            let row = rows
                .iter()
                .find(|r| r[ca] == alpha && r[cs] == seed)
                .ok_or(format!("no sweep row for alpha={alpha} seed={seed}"))?;
            let w2: f64 = row[cw].parse().map_err(err)?;
            // The reported value must match the saved checkpoint.
            let ckpt = out.join(format!("alpha_{alpha}_seed_{seed}")).join("checkpoint.qdck");
            let psi = CheckpointBundle::load(&ckpt).map_err(err)?.psi;
            let again = brenier_w2_estimate(&psi, &states, &actions).map_err(err)?;
            if (again - w2).abs() > 1e-9 * w2.abs().max(1e-12) {
                return Err(format!("sweep.csv w2 {w2} disagrees with checkpoint {again}"));
            }
            w2s.push(w2);
        }
        ok &= w2s.windows(2).all(|w| w[1] <= w[0]);
        parts.push(format!("seed {seed}: {:.2e} >= {:.2e} >= {:.2e}", w2s[0], w2s[1], w2s[2]));
    }
    Ok(Verdict::new(ok, parts.join("; ")))
}

pub fn identity_collapse() -> Outcome {
    let env = Env::Bandit(QuadraticBanditEnv::default());
    let ds = behavior_dataset(&env, 2000, 7)?;
    let (states, actions) = dataset_tensors(&ds);
    let cfg = TrainingConfig {
        frozen_critic: Some(FrozenCritic::Zero),
        batch_size: 256,
        learning_rate: 1e-3,
        ..config(Algorithm::Qdot, 1.0, 7, 3000)
    };
    let mut bundle = CheckpointBundle::for_dataset(cfg, &ds).map_err(err)?;
    // Start well away from the identity: shrink the quadratic and shift.
    bundle.psi.quad = Tensor::filled(1, 1, 0.6);
    bundle.psi.a_out = Tensor::filled(1, 1, 0.3);
    let mean_disp = |psi: &PicnnParams| -> Result<f64, String> {
        let d = displacement_norms(psi, &states, &actions).map_err(err)?;
        Ok(d.iter().sum::<f64>() / d.len() as f64)
    };
    let initial = mean_disp(&bundle.psi)?;
    let (bundle, _) = continue_training(bundle, &ds, 3000).map_err(err)?.into_result().map_err(err)?;
    let last = mean_disp(&bundle.psi)?;
    Ok(Verdict::new(
        last < 0.01,
        format!("mean displacement {initial:.4} at start, {last:.5} after 3000 steps (< 0.01)"),
    ))
}
