//! `dfop` command-line front end.
//!
//! Exit codes: 0 success, 1 a run failed, 2 the manifest or arguments are
//! invalid.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::manifest::{load, ManifestError, Overrides, ProfileSpec};

#[derive(Parser)]
#[command(name = "dfop", version, about = "Derivative-free optimization of transformed and privatized objectives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every problem/solver/seed of a manifest and write full traces.
    Solve {
        manifest: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// Run a benchmark suite and write records, summary and profiles.
    Bench {
        manifest: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// Recompute performance profiles from the CSV files of a bench run.
    Profile {
        /// Directory holding runs.csv, histories.csv and best.csv.
        runs: PathBuf,
        /// Where to write; the run directory when unset.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Accuracy levels (repeatable).
        #[arg(long = "tau")]
        taus: Vec<f64>,
        /// `best-found` or `exclude` for problems without a best value.
        #[arg(long, default_value = "best-found")]
        missing: String,
        #[arg(long, default_value_t = 64.0)]
        alpha_max: f64,
        #[arg(long, default_value_t = 200)]
        alpha_points: usize,
    },
    /// Write per-iteration privacy budgets of the runs in a manifest.
    Audit {
        manifest: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
    /// List the registered problems.
    ListProblems,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Solve { manifest, over } => commands::solve(&load(&manifest, &over)?),
        Command::Bench { manifest, over } => commands::bench(&load(&manifest, &over)?),
        Command::Audit { manifest, over } => {
            let mut over = over;
            over.audit = true;
            commands::audit(&load(&manifest, &over)?)
        }
        Command::Profile { runs, output, taus, missing, alpha_max, alpha_points } => {
            let mut spec = ProfileSpec { missing, alpha_max, alpha_points, ..ProfileSpec::default() };
            if !taus.is_empty() {
                spec.taus = taus;
            }
            spec.validate()?;
            commands::profile(&runs, output, &spec)
        }
        Command::ListProblems => {
            print!("{}", commands::list_problems());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one run failed");
            ExitCode::from(1)
        }
        Err(e) if e.downcast_ref::<ManifestError>().is_some() => {
            eprintln!("error: invalid manifest: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
