//! `switched-entropy`: entropy bounds and estimates for switched linear systems.
//!
//! ```text
//! switched-entropy analyze  --config system.json --out results/
//! switched-entropy estimate --config system.json --out results/
//! switched-entropy flow     --config system.json --out results/
//! switched-entropy reproduce-example --out results/
//! ```
//!
//! Exit status: 0 success, 1 I/O, 2 config, 3 numerical diagnostic,
//! 4 bound violation, 5 reproduction failure.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swent::lie::{StructureOptions, DEFAULT_TOL_CLASSIFY, DEFAULT_TOL_RANK};

use crate::commands::Settings;
use crate::exit::{ExitKind, Failure, Outcome, WithExit};

#[derive(Parser, Debug)]
#[command(
    name = "switched-entropy",
    version,
    about = "Topological entropy of switched linear systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify the modes and report entropy bounds (writes bounds.json).
    Analyze(WithConfig),
    /// Estimate entropy from spanning/separated sets (writes counts.csv, estimate.json, bounds.json).
    Estimate(WithConfig),
    /// Propagate an initial state (writes trajectory.csv).
    Flow(WithConfig),
    /// Rerun the built-in diagonal example pair and check its stated values.
    ReproduceExample(Reproduce),
}

#[derive(Args, Debug)]
struct WithConfig {
    /// JSON system configuration.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Reproduce {
    #[command(flatten)]
    common: Common,
    /// Shift one mode entry of the first example (negative control).
    #[arg(long, hide = true, default_value_t = 0.0)]
    perturb: f64,
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Rank tolerance for Lie closure and derived series.
    #[arg(long, default_value_t = DEFAULT_TOL_RANK)]
    tol_rank: f64,
    /// Tolerance for commutation and triangularization checks.
    #[arg(long, default_value_t = DEFAULT_TOL_CLASSIFY)]
    tol_classify: f64,
    /// Start of the tail window, as a fraction of the horizon, for estimated fractions.
    #[arg(long, default_value_t = 0.5)]
    tail_fraction: f64,
}

impl Common {
    fn settings(&self) -> Outcome<Settings> {
        for (name, v) in [("--tol-rank", self.tol_rank), ("--tol-classify", self.tol_classify)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Failure::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return Err(Failure::config(format!(
                "--tail-fraction must lie in (0, 1), got {}",
                self.tail_fraction
            )));
        }
        Ok(Settings {
            out: self.out.clone(),
            structure: StructureOptions {
                tol_rank: self.tol_rank,
                tol_classify: self.tol_classify,
            },
            tail_fraction: self.tail_fraction,
        })
    }
}

/// Sizes the rayon pool from `SWENT_THREADS` (unset or 0 = automatic).
fn configure_threads() -> Outcome<()> {
    let threads = match std::env::var("SWENT_THREADS") {
        Err(_) => return Ok(()),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Failure::config(format!("SWENT_THREADS must be a non-negative integer, got {v:?}")))?,
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .exit(ExitKind::Config)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome<()> {
    configure_threads()?;
    match cli.command {
        Command::Analyze(a) => {
            let settings = a.common.settings()?;
            commands::analyze(&config::load(&a.config)?, &settings)
        }
        Command::Estimate(a) => {
            let settings = a.common.settings()?;
            commands::estimate(&config::load(&a.config)?, &settings)
        }
        Command::Flow(a) => {
            let settings = a.common.settings()?;
            commands::flow(&config::load(&a.config)?, &settings)
        }
        Command::ReproduceExample(r) => commands::reproduce_example(&r.common.settings()?, r.perturb),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
