use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::DomainViolation;

/// Deep fault-tolerant control pipeline for the reaction-wheel pendulum.
#[derive(Debug, Parser)]
#[command(name = "dftc", version)]
struct Cli {
    /// JSON run configuration; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a config entry, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Output directory (overrides `paths.out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rank sensor configurations by the observability measure.
    Gramian,
    /// Generate fault-free baseline trajectories.
    Gen,
    /// Add fault-injected copies of every trajectory.
    Augment,
    /// Assign train/val/test splits and fit the normalizer.
    Split,
    /// Train the recurrent controller (and the dense one with --fnn).
    Train {
        #[arg(long)]
        fnn: bool,
    },
    /// Run the closed-loop fault-injection suite.
    Eval {
        /// Also write per-run time series.
        #[arg(long)]
        dump_traj: bool,
    },
    /// gen, augment, split, train (both models) and eval.
    Pipeline {
        /// Reuse the model files already in the output directory.
        #[arg(long)]
        skip_train: bool,
        #[arg(long)]
        dump_traj: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.sets)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.paths.out = out;
    }
    match cli.command {
        Command::Gramian => commands::gramian(&cfg),
        Command::Gen => commands::gen(&cfg),
        Command::Augment => commands::augment_stage(&cfg),
        Command::Split => commands::split_stage(&cfg),
        Command::Train { fnn } => commands::train(&cfg, fnn),
        Command::Eval { dump_traj } => commands::eval(&cfg, dump_traj),
        Command::Pipeline { skip_train, dump_traj } => commands::pipeline(&cfg, skip_train, dump_traj),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<DomainViolation>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
