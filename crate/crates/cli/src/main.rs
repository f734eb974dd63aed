//! `affuse`: validate feature packs, train fusion heads, predict, sweep
//! post-processing parameters and compare reports.
//!
//! Exit codes: 0 success, 1 invalid data or request, 2 I/O failure,
//! 3 config schema violation or bad invocation.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{SynthArgs, SynthTask};

#[derive(Parser)]
#[command(name = "affuse", version, about = "Multimodal late-fusion engine for affect prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a feature pack against every data invariant.
    Validate { pack: PathBuf },
    /// Train the heads named by a config and save them under `<output>/models`.
    Train {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Apply trained heads and write `predictions.csv` and `report.json`.
    Predict {
        #[arg(short, long)]
        config: PathBuf,
        /// Model directory; defaults to `<output>/models`.
        #[arg(short, long)]
        models: Option<PathBuf>,
    },
    /// Evaluate the config's sweep axis and write `sweep.csv` and `sweep.json`.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        models: Option<PathBuf>,
        /// Worker threads (overrides AFFUSE_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rank reports of one task by their headline metric.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a synthetic pack with known structure.
    Synth {
        task: SynthTask,
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// EMI only: seed of the fixed descriptor-to-intensity map.
        #[arg(long, default_value_t = 0)]
        world_seed: u64,
        #[arg(long)]
        videos: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        unlabelled: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Validate { pack } => commands::validate(&pack),
        Command::Train { config } => commands::train(&config),
        Command::Predict { config, models } => commands::predict(&config, models.as_deref()),
        Command::Sweep { config, models, threads } => commands::sweep(&config, models.as_deref(), threads),
        Command::Report { reports, csv } => commands::report(&reports, csv.as_deref()),
        Command::Synth { task, out, seed, world_seed, videos, frames, unlabelled } => {
            commands::synth(&SynthArgs { task, out, seed, world_seed, videos, frames, unlabelled })
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
