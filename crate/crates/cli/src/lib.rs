//! Benchmark runner over the ECG core: synthetic corpora, dataset
//! preparation, self-supervised pretraining, task training and evaluation,
//! the temporal-shift probe, and aggregate tables.
//!
//! Configuration precedence: preset defaults, then the `--config` file, then
//! `--seed` and `--out`.

pub mod commands;
pub mod config;
mod error;
pub mod shards;
pub mod table;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Overrides, Preset, RunConfig};
pub use error::{exit, CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "ecgbench", version, about = "ECG benchmark runner")]
pub struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads; 1 gives bitwise-reproducible runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Base layer of default values.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic record corpus.
    Synth,
    /// Resample, filter, split and window records.
    Prep,
    /// Self-supervised pretraining on the prepared train split.
    Pretrain,
    /// Train a task model and evaluate it on the test split.
    Train,
    /// Evaluate a trained task model on the test split.
    Eval,
    /// MSE and FFD between windows and their circular shifts.
    ProbeShift,
    /// Aggregate evaluation reports into tables.
    Report {
        /// Run directories or report files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Print the resolved configuration.
    Config,
}

impl Cli {
    pub fn resolve(&self) -> Result<RunConfig> {
        let flags = Overrides {
            preset: self.preset,
            seed: self.seed,
            out: self.out.clone(),
        };
        RunConfig::load(self.config.as_deref(), &flags)
    }
}

/// Runs one command and returns the text to print.
pub fn run(cli: &Cli) -> Result<String> {
    let config = cli.resolve()?;
    Ok(match &cli.command {
        Command::Synth => commands::synth(&config)?.to_string(),
        Command::Prep => commands::prep(&config)?.to_string(),
        Command::Pretrain => commands::pretrain_cmd(&config)?.to_string(),
        Command::Train => report_text(&commands::train_cmd(&config)?),
        Command::Eval => report_text(&commands::eval_cmd(&config)?),
        Command::ProbeShift => commands::render_probe(&commands::probe_cmd(&config)?),
        Command::Report { runs } => commands::report_cmd(&config, runs)?
            .iter()
            .map(table::Table::to_markdown)
            .collect::<Vec<_>>()
            .join("\n"),
        Command::Config => config.to_toml()?,
    })
}

fn report_text(r: &ecgbench_core::metrics::EvalReport) -> String {
    let metrics: Vec<String> = r.metrics.iter().map(|m| format!("{} {:.6}", m.name, m.value)).collect();
    format!("{} / {} / {}: {}", r.task, r.dataset, r.model, metrics.join(", "))
}
