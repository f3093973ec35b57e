//! `unimatch`: cycle-consistent multi-shape matching from the command line.
//!
//! Subcommands wire caches, training, matching, and evaluation into
//! reproducible runs; all randomness flows from the single seed in the run
//! configuration. Exit codes: 0 success, 2 configuration error, 3 data
//! error, 4 numerical failure.

mod config;
mod runner;

use clap::{Parser, Subcommand};
use config::RunConfig;
use runner::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "unimatch", version, about = "Cycle-consistent multi-shape matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic collection (meshes + ground truth) to disk.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build spectral and descriptor caches for every mesh in the collection.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the feature extractor and universe classifier.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by a previous run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Predict universe assignments and all pairwise maps; verifies cycle
    /// consistency and fails on any violation.
    Match {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Additionally write per-pair maps after five-pass fine-tuning.
        #[arg(long, default_value_t = false)]
        fine_tune: bool,
    },
    /// Score predicted maps against ground truth: mean geodesic error and a
    /// PCK table.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Directory containing map-<i>-<j>.txt prediction files.
        #[arg(long)]
        pred_dir: PathBuf,
        /// Index base of ground-truth files (overrides the config key).
        #[arg(long)]
        index_base: Option<usize>,
    },
    /// Export one pair's functional map as plain text.
    ExportFmap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        source: usize,
        #[arg(long)]
        target: usize,
    },
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    RunConfig::load(path).map_err(CliError::from)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { config } => runner::cmd_synth(&load_config(&config)?),
        Command::Preprocess { config } => runner::cmd_preprocess(&load_config(&config)?),
        Command::Train { config, resume } => {
            runner::cmd_train(&load_config(&config)?, resume.as_deref())
        }
        Command::Match { config, checkpoint, fine_tune } => {
            runner::cmd_match(&load_config(&config)?, &checkpoint, fine_tune)
        }
        Command::Eval { config, pred_dir, index_base } => {
            let mut cfg = load_config(&config)?;
            if let Some(base) = index_base {
                cfg.index_base = base;
            }
            runner::cmd_eval(&cfg, &pred_dir)
        }
        Command::ExportFmap { config, checkpoint, source, target } => {
            runner::cmd_export_fmap(&load_config(&config)?, &checkpoint, source, target)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("unimatch: {e}");
            match e {
                CliError::Config(_) => ExitCode::from(2),
                CliError::Data(_) => ExitCode::from(3),
                CliError::Numerical(_) => ExitCode::from(4),
            }
        }
    }
}
