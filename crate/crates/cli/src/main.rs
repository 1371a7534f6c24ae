//! `disco` — train, evaluate, and visualize contrastive direction
//! discovery on frozen generators.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime/metric error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "disco", version, about = "Contrastive discovery of latent directions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a navigator and encoder from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (checkpoint/ and train_log.jsonl land here).
        #[arg(long)]
        out: PathBuf,
        /// Override trainer.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute disentanglement metrics for a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Write the JSON report here (also printed to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated metric list, e.g. `mig,dci`.
        #[arg(long)]
        metrics: Option<String>,
        /// Evaluation sampling seed (defaults to the checkpoint's seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a latent traversal grid for one direction.
    Traverse {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        direction: usize,
        /// Comma-separated shift scalars (default: 7 even steps over
        /// [-eps_max, eps_max]).
        #[arg(long, allow_hyphen_values = true)]
        steps: Option<String>,
        /// Number of base latents (grid rows).
        #[arg(long, default_value_t = 4)]
        rows: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export the direction-similarity matrix (CSV + heatmap PNG).
    Simmatrix {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Variation samples behind each per-direction mean (>= 16).
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export a 3D latent scatter CSV for three factors.
    Scatter {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Three comma-separated factor indices.
        #[arg(long, default_value = "0,1,2")]
        factors: String,
        /// Grid steps per factor.
        #[arg(long, default_value_t = 10)]
        grid: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train + evaluate across several seeds and aggregate.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seed list.
        #[arg(long)]
        seeds: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out, seed } => commands::cmd_train(&config, &out, seed),
        Command::Eval { checkpoint, out, metrics, seed } => {
            commands::cmd_eval(&checkpoint, out.as_deref(), metrics.as_deref(), seed)
        }
        Command::Traverse { checkpoint, out, direction, steps, rows, seed } => {
            commands::cmd_traverse(&checkpoint, &out, direction, steps.as_deref(), rows, seed)
        }
        Command::Simmatrix { checkpoint, out, samples, seed } => {
            commands::cmd_simmatrix(&checkpoint, &out, samples, seed)
        }
        Command::Scatter { checkpoint, out, factors, grid, seed } => {
            commands::cmd_scatter(&checkpoint, &out, &factors, grid, seed)
        }
        Command::Sweep { config, out, seeds } => commands::cmd_sweep(&config, &out, &seeds),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
