//! Command-line front end.

pub mod config;
mod dispatch;
pub mod output;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::fvm::FvmError;
use crate::micro::MicroError;
use crate::model::ModelError;
use crate::riemann::RiemannError;
use crate::scenarios::ScenarioError;
use config::{build_config, split_assignment, tokenize, ConfigError};
use dispatch::{dispatch, Command};
use output::OutputError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_FAILURE: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("reading config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("output error: {0}")]
    Output(#[from] OutputError),
    #[error("scenario error: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("numerical error: {0}")]
    Fvm(#[from] FvmError),
    #[error("micro error: {0}")]
    Micro(#[from] MicroError),
    #[error("riemann error: {0}")]
    Riemann(#[from] RiemannError),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::ReadConfig { .. } => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lanewave", version, about = "Two-dimensional lane-free traffic: macroscopic and particle simulations")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override a config key, e.g. `--set nx=100`; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Finite-volume run on the 2D road.
    #[command(name = "run-macro-2d")]
    RunMacro2d,
    /// Finite-volume run of the 1D reduction.
    #[command(name = "run-macro-1d")]
    RunMacro1d,
    /// Particle run.
    RunMicro,
    /// Particle versus continuum comparison, or reference trajectory comparison.
    Compare,
    /// Classify and solve the Riemann problem between `wl` and `wr`.
    Riemann,
    /// Spectrum and invariants at `wl` in direction `xi`.
    Eigen,
}

fn load(cli: &Cli) -> Result<config::RunConfig, CliError> {
    let (mut assignments, base_dir) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|source| CliError::ReadConfig { path: path.clone(), source })?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (tokenize(&text)?, base)
        }
        None => (Vec::new(), PathBuf::new()),
    };
    for s in &cli.set {
        assignments.push(split_assignment(s, 0)?);
    }
    let base_dir = if base_dir.as_os_str().is_empty() { PathBuf::from(".") } else { base_dir };
    Ok(build_config(assignments, &base_dir)?)
}

fn execute(cli: &Cli, stdout: &mut String) -> Result<(), CliError> {
    let config = load(cli)?;
    let command = match cli.command {
        Sub::RunMacro2d => Command::RunMacro2d,
        Sub::RunMacro1d => Command::RunMacro1d,
        Sub::RunMicro => Command::RunMicro,
        Sub::Compare => Command::Compare,
        Sub::Riemann => Command::Riemann,
        Sub::Eigen => Command::Eigen,
    };
    dispatch(command, &config, &cli.out, stdout)
}

/// Parses `args` (including the program name) and runs the selected command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let mut stdout = String::new();
    let result = execute(&cli, &mut stdout);
    let _ = std::io::stdout().write_all(stdout.as_bytes());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lanewave: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
