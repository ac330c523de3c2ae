//! Command-line front end: config parsing, task dispatch and CSV output.

pub mod config;
pub mod output;
pub mod tasks;
pub mod validate;

use std::io;
use std::path::PathBuf;

use clap::Parser;
use thiserror::Error;

pub use config::{load_config, ConfigError, LoadedConfig, RunConfig, Task};
pub use tasks::{run_task, TaskOutput};

use crate::dof::DofError;
use crate::geometry::GeometryError;
use crate::linkbudget::LinkBudgetError;
use crate::quadrature::QuadratureError;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "LIS_LIMITS_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("kernel needs {required} complex entries but the budget is {budget}; raise modes.budget to at least {required}")]
    Budget { required: usize, budget: usize },
    #[error("{0}")]
    Compute(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Budget { .. } => EXIT_BUDGET,
            CliError::Compute(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

macro_rules! compute_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Compute(e.to_string())
            }
        })*
    };
}

compute_error!(GeometryError, LinkBudgetError, DofError, QuadratureError);

#[derive(Debug, Parser)]
#[command(name = "lis-limits", version, about = "Link gain, degrees of freedom and communication modes of intelligent-surface links")]
pub struct Args {
    /// TOML run configuration.
    pub config: PathBuf,
    /// Override a config key, e.g. `--set geometry.distance="2 m"`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (same as `--set output.directory=...`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Loads the config named by `args` and runs its task.
pub fn execute(args: &Args) -> Result<TaskOutput, CliError> {
    let source = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", args.config.display()),
        })
    })?;
    let mut overrides = args.overrides.clone();
    if let Some(dir) = &args.output {
        let quoted = toml::Value::String(dir.display().to_string()).to_string();
        overrides.push(format!("output.directory={quoted}"));
    }
    let loaded = load_config(&source, &overrides)?;
    run_task(&loaded)
}

/// Process entry point; returns the exit code.
pub fn main_with(args: Args) -> i32 {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                // Fails only when a pool already exists, which is harmless.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return EXIT_CONFIG;
            }
        }
    }
    match execute(&args) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.failed_checks.is_empty() {
                EXIT_OK
            } else {
                eprintln!("failed checks: {}", out.failed_checks.join(", "));
                EXIT_FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
