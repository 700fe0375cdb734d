//! Acceptance suite. Runs every criterion in order and prints one line each.
//!
//! `cargo test --test acceptance` runs everything; `cargo test --test
//! acceptance -- 3 5` runs only criteria 3 and 5.

mod autodiff;
mod common;
mod pipeline;
mod transport;

use std::process::ExitCode;
use std::time::{Duration, Instant};

/// Outcome of one criterion: pass flag plus the measured numbers.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

pub type Outcome = Result<Verdict, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn(&mut pipeline::Shared) -> Outcome,
}

fn criteria() -> Vec<Criterion> {
    let mins = |m: u64| Duration::from_secs(60 * m);
    vec![
        Criterion { id: 1, name: "autodiff soundness", budget: mins(1), run: |_| autodiff::run() },
        Criterion { id: 2, name: "convexity preservation", budget: mins(5), run: |_| transport::convexity() },
        Criterion { id: 3, name: "brenier estimate vs exact OT", budget: mins(5), run: |_| transport::brenier_vs_exact() },
        Criterion { id: 4, name: "pointwise transport optimum", budget: mins(5), run: |_| transport::pointwise_optimum() },
        Criterion { id: 5, name: "expectile fixed point", budget: mins(1), run: |_| transport::expectile_fixed_point() },
        Criterion { id: 6, name: "alpha monotonicity", budget: mins(15), run: |_| transport::alpha_monotonicity() },
        Criterion { id: 7, name: "identity collapse", budget: mins(2), run: |_| transport::identity_collapse() },
        Criterion { id: 8, name: "end-to-end ordering", budget: mins(30), run: control::ordering },
        Criterion { id: 9, name: "trajectory-quality trend", budget: mins(30), run: control::quality_trend },
        Criterion { id: 10, name: "AdvW contrast", budget: mins(45), run: |_| control::advw_contrast() },
        Criterion { id: 11, name: "determinism and formats", budget: mins(2), run: |_| pipeline::determinism() },
    ]
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = pipeline::Shared::default();
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria() {
        if !selected.is_empty() && !selected.contains(&c.id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = (c.run)(&mut shared);
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_budget = took <= c.budget;
        let pass = pass && in_budget;
        if !pass {
            failed += 1;
        }
        let budget_note = if in_budget { String::new() } else { format!(" over budget of {}s", c.budget.as_secs()) };
        println!(
            "criterion {:>2} {:<30} {} [{}] ({:.1}s{budget_note})",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            detail,
            took.as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
