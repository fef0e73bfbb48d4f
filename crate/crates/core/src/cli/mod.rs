//! Command-line front end: `generate`, `run` and `validate`.

pub mod config;
mod generate;
mod output;
mod run;
mod validate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{CurveKind, ExperimentConfig, LoadedConfig};
pub use generate::{cmd_generate, Manifest};
pub use run::{cmd_run, plan_curves, CurveBundle, Scalars};
pub use validate::{cmd_validate, CheckResult, ValidationReport, ValidateOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] crate::Error),
    #[error("validation failed: {0} check(s) did not pass")]
    ValidationFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::ValidationFailed(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kaczlab", version, about = "Randomized Kaczmarz MSE experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for Monte Carlo trials; 0 picks automatically.
    #[arg(long, env = "KACZLAB_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[arg(long, short)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a matrix file and its manifest.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run an experiment and write curves.csv and result.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the small-instance oracle suite and write validation.json.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        /// Test mode: corrupt the eigenvalue tolerance so the suite fails.
        #[arg(long, hide = true)]
        corrupt_lambda_tolerance: bool,
    },
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Generate { common, .. } | Command::Run { common, .. } | Command::Validate { common, .. } => common,
        }
    }
}

/// Execute a parsed command line.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot configure thread pool: {e}")))?;
    std::fs::create_dir_all(&common.out).map_err(crate::Error::from)?;

    match &cli.command {
        Command::Generate { config, common } => {
            let loaded = LoadedConfig::from_path(config)?;
            let manifest = cmd_generate(&loaded, &common.out)?;
            log::info!("wrote {} x {} matrix to {}", manifest.m, manifest.n, common.out.display());
        }
        Command::Run { config, common } => {
            let loaded = LoadedConfig::from_path(config)?;
            let bundle = cmd_run(&loaded)?;
            for w in &bundle.warnings {
                log::warn!("{w}");
            }
            output::write_bundle(&bundle, &common.out)?;
            log::info!("wrote curves.csv and result.json to {}", common.out.display());
        }
        Command::Validate {
            config,
            common,
            corrupt_lambda_tolerance,
        } => {
            let mut opts = match config {
                Some(path) => ValidateOptions::from_path(path)?,
                None => ValidateOptions::default(),
            };
            opts.corrupt_lambda_tolerance = *corrupt_lambda_tolerance;
            let report = cmd_validate(&opts)?;
            output::write_json(&report, &common.out.join("validation.json"))?;
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            for c in report.checks.iter().filter(|c| !c.pass) {
                log::error!("{} on {}: deviation {:e} > {:e}", c.name, c.instance, c.deviation, c.tolerance);
            }
            log::info!("{} checks, {failed} failed", report.checks.len());
            if failed > 0 {
                return Err(CliError::ValidationFailed(failed));
            }
        }
    }
    Ok(())
}
