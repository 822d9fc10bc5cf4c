//! Command-line pipeline: configuration, ingestion, subcommands and reports.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::{PipelineConfig, SchemeChoice};
use crate::output::OutputDir;

pub const DEFAULT_OUT: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "mdpov", version, about = "Poverty measurement and household panel estimation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for synthetic data and permutation tests.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Poverty cutoff, replacing the configured k values.
    #[arg(long, global = true)]
    pub k: Option<f64>,
    /// Indicator scheme: baseline, with_income or custom.
    #[arg(long, global = true)]
    pub scheme: Option<SchemeChoice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Adjusted headcount ratio, headcount, intensity and contributions.
    Mpi,
    /// Headcount over a grid of k.
    Curve,
    /// Entropy-weighted livelihood capital scores.
    Entropy,
    /// Two-period pension model closed forms and sweeps.
    Olg,
    /// Configured fixed-effects models.
    Fit,
    /// Bartik instrument and recursive joint estimation.
    Iv,
    /// Propensity-score matching and balance.
    Psm,
    /// Group coefficient-equality tests.
    Chow,
    /// Synthetic household panel.
    Synth,
    /// mpi, entropy and fit in sequence.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Mpi => "mpi",
            Command::Curve => "curve",
            Command::Entropy => "entropy",
            Command::Olg => "olg",
            Command::Fit => "fit",
            Command::Iv => "iv",
            Command::Psm => "psm",
            Command::Chow => "chow",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::from_toml("")?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(k) = cli.k {
        cfg.mpi.k = vec![k];
    }
    if let Some(s) = cli.scheme {
        cfg.mpi.scheme = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    let out = OutputDir::new(cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)))?;
    let mut run = Run::new(cfg, out);
    let name = cli.command.name();
    match cli.command {
        Command::Mpi => run.mpi(),
        Command::Curve => run.curve(),
        Command::Entropy => run.entropy(),
        Command::Olg => run.olg(),
        Command::Fit => run.fit(),
        Command::Iv => run.iv(),
        Command::Psm => run.psm(),
        Command::Chow => run.chow(),
        Command::Synth => run.synth(),
        Command::Report => run.report(),
    }
    .with_context(|| format!("`{name}` failed"))?;
    let manifest = run.manifest(name);
    run.out.write_json(&format!("manifest_{name}.json"), &manifest)
}
