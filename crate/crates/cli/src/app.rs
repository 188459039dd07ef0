//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::*;
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::synth::{SynthKind, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "sonnet", version, about = "Train, evaluate and ablate Sonnet forecasters")]
pub struct Cli {
    /// Override a configuration key, e.g. `--set train.lr=5e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes the checkpoint, history CSV and resolved config.
    Train {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Score a checkpoint on every test season, with baselines.
    Evaluate {
        #[arg(long, short)]
        config: PathBuf,
        /// Defaults to `<output_dir>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Forecast the horizon after the last row of the dataset.
    Forecast {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to `<output_dir>/forecast.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive search over the `[grid]` axes.
    GridSearch {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Train the full model and the five single-module ablations.
    Ablate {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Write a synthetic series as CSV.
    Synth {
        /// sinusoid, seasonal-walk or leading-indicator.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        period: usize,
        /// Steps by which the leading indicator runs ahead of the target.
        #[arg(long, default_value_t = 1)]
        lead: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> CliResult<String> {
    let load = |p: &PathBuf| ExperimentConfig::load(p, &cli.overrides);
    Ok(match &cli.command {
        Command::Train { config } => {
            let cfg = load(config)?;
            let out = cmd_train(&cfg)?;
            let h = &out.history;
            format!(
                "trained {} epochs, best epoch {} (val loss {}); checkpoint {}",
                h.epochs.len(),
                h.best_epoch,
                h.best_val_loss().unwrap_or(f64::NAN),
                out.checkpoint.display()
            )
        }
        Command::Evaluate { config, checkpoint } => {
            let cfg = load(config)?;
            cmd_evaluate(&cfg, checkpoint.as_deref())?.report.to_csv()
        }
        Command::Forecast { config, checkpoint, out } => {
            let cfg = load(config)?;
            let values = cmd_forecast(&cfg, checkpoint.as_deref(), out.as_deref())?;
            values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n")
        }
        Command::GridSearch { config } => {
            let cfg = load(config)?;
            let g = cmd_grid_search(&cfg)?;
            format!(
                "best of {} points: #{} alpha={} n_atoms={} dropout={} lr={}",
                g.leaderboard.len(),
                g.best_index,
                g.best.alpha,
                g.best.n_atoms,
                g.best.dropout,
                g.best.lr
            )
        }
        Command::Ablate { config } => {
            let cfg = load(config)?;
            let a = cmd_ablate(&cfg)?;
            let mut s = String::from("variant,parameters,season,mae,delta_pct\n");
            for r in &a.rows {
                s += &format!("{},{},{},{},{:.2}\n", r.variant, r.parameters, r.season, r.mae, r.delta_pct);
            }
            for e in &a.equivalences {
                s += &format!("{} equals its neutral full model bitwise: {}\n", e.variant, e.bitwise_equal);
            }
            s
        }
        Command::Synth { kind, n, seed, period, lead, out } => {
            let spec = SynthSpec {
                kind: kind.parse::<SynthKind>()?,
                n: *n,
                seed: *seed,
                period: *period,
                lead: *lead,
            };
            cmd_synth(&spec, out)?;
            format!("wrote {} rows to {}", n, out.display())
        }
    })
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
