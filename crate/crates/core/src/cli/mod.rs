//! Command-line front end.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::Context;
pub use config::{CleanConfig, CorrConfig, DataConfig, ModelConfig, PhaseSetting, Roles, RunConfig};

use crate::corr::with_threads;
use crate::error::{Error, Result};

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "CONDNORM_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "condnorm",
    version,
    about = "Conditional normalization, imputation and lag-time estimation for sensor series"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the bootstrap or the simulator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-lag fits and bootstrap replicates.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write lag curves along each covariate with the others held fixed.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Range flags, wiper removal, aggregation and interpolation.
    Clean,
    /// Fit mean and variance models and write normalized series.
    Normalize,
    /// Fill missing values of the response.
    Impute,
    /// Conditional cross-correlation of downstream on upstream.
    Ccf,
    /// Lag-time estimate with bootstrap bounds and evaluation.
    Lagtime,
    /// Write a synthetic dataset.
    Synth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Hold other covariates at their medians.
    Median,
}

/// Output directory by precedence: flag, environment, config, `out`.
pub fn output_dir(flag: Option<PathBuf>, env: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or(env)
        .or_else(|| cfg.config_output())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs one command and returns the files written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let path = cli.config.ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = RunConfig::load(&path)?;
    let env = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let out = output_dir(cli.out, env, &cfg);
    std::fs::create_dir_all(&out).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })?;
    let ctx = Context {
        out,
        seed: cli.seed,
        profile_median: cli.profile == Some(Profile::Median),
    };
    let threads = cli.threads.unwrap_or(cfg.corr.threads);
    let command = cli.command;
    with_threads(threads, || match command {
        Command::Clean => commands::clean(&cfg, &ctx),
        Command::Normalize => commands::normalize(&cfg, &ctx),
        Command::Impute => commands::impute(&cfg, &ctx),
        Command::Ccf => commands::ccf(&cfg, &ctx),
        Command::Lagtime => commands::lagtime(&cfg, &ctx),
        Command::Synth => commands::synth(&cfg, &ctx),
    })?
}
