//! File formats, determinism and the exit-code contract, driven through the
//! binary.

use std::path::Path;

use qdot_core::envs::OfflineDataset;
use qdot_core::qdot::{continue_training, CheckpointBundle};

use crate::common::{path_str, qdot, qdot_ok};
use crate::{Outcome, Verdict};

/// Runs reused between criteria.
#[derive(Default)]
pub struct Shared {
    pub mixed: Option<MixedRuns>,
}

/// Paired point-mass runs on the mixed-quality dataset.
pub struct MixedRuns {
    pub dataset: OfflineDataset,
    pub bundles: Vec<CheckpointBundle>,
    pub qdot: Vec<f64>,
    pub iql: Vec<f64>,
    pub bc: Vec<f64>,
    pub random: Vec<f64>,
    pub expert: Vec<f64>,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn same_file(a: &Path, b: &Path) -> Result<(), String> {
    if read(a)? != read(b)? {
        return Err(format!("{} and {} differ", a.display(), b.display()));
    }
    Ok(())
}

const TRAIN_SETTINGS: [&str; 12] = [
    "--set", "hidden_units=16", "--set", "batch_size=32", "--set", "eval_interval=100", "--set", "log_interval=50",
    "--set", "eval_episodes=3", "--total-steps", "300",
];

fn expect_code(args: &[&str], code: i32) -> Result<(), String> {
    let out = qdot(args);
    match out.status.code() {
        Some(c) if c == code => Ok(()),
        other => Err(format!(
            "`qdot {}` exited with {other:?}, expected {code}: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )),
    }
}

pub fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let p = |name: &str| path_str(&dir.path().join(name));
    let mut checks = 0;

    // Datasets.
    for name in ["d1.qdds", "d2.qdds"] {
        qdot_ok(&[
            "gen-data", "--env", "point-mass", "--mix", "expert:0.3,mediocre:0.4,random:0.3", "--trajectories", "20",
            "--seed", "5", "--out", &p(name),
        ])?;
    }
    same_file(&dir.path().join("d1.qdds"), &dir.path().join("d2.qdds"))?;
    let bytes = read(&dir.path().join("d1.qdds"))?;
    if OfflineDataset::from_bytes(&bytes).and_then(|d| d.to_bytes()).map_err(err)? != bytes {
        return Err("dataset round trip changed bytes".into());
    }
    checks += 2;

    // Training outputs.
    let data = p("d1.qdds");
    for run in ["r1", "r2"] {
        let mut args = vec!["train", "--dataset", &data];
        let out = p(run);
        args.extend(["--out-dir", &out, "--seed", "3"]);
        args.extend(TRAIN_SETTINGS);
        qdot_ok(&args)?;
    }
    for file in ["metrics.csv", "checkpoint.qdck"] {
        same_file(&dir.path().join("r1").join(file), &dir.path().join("r2").join(file))?;
        checks += 1;
    }
    let ckpt_bytes = read(&dir.path().join("r1/checkpoint.qdck"))?;
    let bundle = CheckpointBundle::from_bytes(&ckpt_bytes).map_err(err)?;
    if bundle.to_bytes().map_err(err)? != ckpt_bytes {
        return Err("checkpoint round trip changed bytes".into());
    }
    checks += 1;

    // Stopping at step 150, saving, reloading and continuing must land on
    // the same bytes as the uninterrupted run.
    let ds = OfflineDataset::load(dir.path().join("d1.qdds")).map_err(err)?;
    let fresh = CheckpointBundle::for_dataset(bundle.config.clone(), &ds).map_err(err)?;
    let half = continue_training(fresh, &ds, 150).map_err(err)?.into_result().map_err(err)?.0;
    let reloaded = CheckpointBundle::from_bytes(&half.to_bytes().map_err(err)?).map_err(err)?;
    let resumed = continue_training(reloaded, &ds, 300).map_err(err)?.into_result().map_err(err)?.0;
    if resumed.to_bytes().map_err(err)? != ckpt_bytes {
        return Err("resumed run differs from the uninterrupted one".into());
    }
    checks += 1;

    // Evaluation output is a pure function of (checkpoint, seed).
    let ckpt = p("r1/checkpoint.qdck");
    let e1 = qdot_ok(&["eval", "--checkpoint", &ckpt, "--episodes", "4", "--seed", "9"])?;
    let e2 = qdot_ok(&["eval", "--checkpoint", &ckpt, "--episodes", "4", "--seed", "9"])?;
    if e1 != e2 || !e1.contains("return_mean=") {
        return Err(format!("eval output not reproducible: {e1:?} vs {e2:?}"));
    }
    checks += 1;

    // Exit codes.
    std::fs::write(dir.path().join("junk.qdds"), b"not a dataset").map_err(err)?;
    let mut bc = vec!["train", "--dataset", &data];
    let bc_out = p("bc");
    bc.extend(["--out-dir", &bc_out, "--algorithm", "bc"]);
    bc.extend(TRAIN_SETTINGS);
    qdot_ok(&bc)?;
    let cases: Vec<(Vec<String>, i32)> = vec![
        (vec!["train".into()], 2),
        (vec!["frobnicate".into()], 2),
        (vec!["train".into(), "--dataset".into(), p("d1.qdds"), "--out-dir".into(), p("x"), "--set".into(), "bogus=1".into()], 2),
        (vec!["eval".into(), "--checkpoint".into(), ckpt.clone(), "--episodes".into(), "0".into()], 2),
        (vec!["sweep".into(), "--dataset".into(), p("d1.qdds"), "--out-dir".into(), p("s"), "--alphas".into(), "1,x".into()], 2),
        (vec!["analyze".into(), "--dataset".into(), p("d1.qdds"), "--checkpoint".into(), p("bc/checkpoint.qdck")], 2),
        (vec!["eval".into(), "--checkpoint".into(), p("missing.qdck")], 3),
        (vec!["train".into(), "--dataset".into(), p("junk.qdds"), "--out-dir".into(), p("y")], 3),
        (
            vec![
                "train".into(), "--dataset".into(), p("d1.qdds"), "--out-dir".into(), p("blowup"), "--set".into(),
                "learning_rate=1e300".into(), "--set".into(), "hidden_units=16".into(), "--total-steps".into(), "50".into(),
            ],
            4,
        ),
    ];
    for (args, code) in &cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        expect_code(&args, *code)?;
        checks += 1;
    }
    // A failed run still leaves a loadable checkpoint of its last good step.
    let last_good = CheckpointBundle::load(dir.path().join("blowup/checkpoint.qdck")).map_err(err)?;
    checks += 1;

    Ok(Verdict::new(
        true,
        format!("{checks} checks; numeric failure kept checkpoint at step {}", last_good.step),
    ))
}
