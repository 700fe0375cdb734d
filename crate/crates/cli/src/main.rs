//! `qdot`: dataset generation, training, evaluation, alpha sweeps and the
//! transport-distance analysis. All outputs are CSV or binary files.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failure with the exit code it maps to: 2 arguments, 3 I/O, 4 numeric.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError { code: 3, message: msg.into() }
    }
}

impl From<qdot_core::Error> for CliError {
    fn from(e: qdot_core::Error) -> Self {
        use qdot_core::Error as E;
        let code = if e.is_numeric() {
            4
        } else {
            let root = match &e {
                E::Training { source, .. } => source.as_ref(),
                other => other,
            };
            match root {
                E::Io(_) | E::Format { .. } | E::Convexity(_) => 3,
                _ => 2,
            }
        };
        CliError { code, message: e.to_string() }
    }
}

#[derive(Parser)]
#[command(name = "qdot", version, about = "Offline RL with optimal-transport policy regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct Common {
    /// Plain-text `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out scripted behavior policies and write a dataset file.
    GenData(commands::GenDataArgs),
    /// Train one agent on a dataset.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint's deterministic policy.
    Eval(commands::EvalArgs),
    /// Train once per (alpha, seed) pair and tabulate the results.
    Sweep(commands::SweepArgs),
    /// Per-trajectory return versus mean transport distance.
    Analyze(commands::AnalyzeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Analyze(a) => commands::analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            if e.code == 2 {
                use clap::CommandFactory;
                eprintln!("{}", Cli::command().render_usage());
            }
            ExitCode::from(e.code)
        }
    }
}
