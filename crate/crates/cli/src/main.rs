//! `phaselab` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 solver
//! non-convergence, 4 numerical failure, 5 theorem check violation.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(phaselab::Error),
    NonConvergence(String),
    Violation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Violation(_) => 5,
            CliError::Core(e) if e.is_numerical() => 4,
            CliError::Core(phaselab::Error::MaxIterations(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::NonConvergence(msg) | CliError::Violation(msg) => {
                f.write_str(msg)
            }
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<phaselab::Error> for CliError {
    fn from(e: phaselab::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "phaselab", version, about = "Phase transitions of corrupted sensing recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print predicted thresholds, regime and tail bounds.
    Predict(Common),
    /// Solve one instance, generated or read from a file.
    Solve(Common),
    /// Sweep a grid and compare its 50% crossings with the predicted boundary.
    PhaseDiagram(Common),
    /// Check the relations between the constrained and penalized thresholds.
    VerifyTheorem3(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file of key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// A positive number or `optimal`.
    #[arg(long)]
    lambda: Option<String>,
    /// `gaussian` or `bernoulli`.
    #[arg(long)]
    ensemble: Option<String>,
    /// Continue an interrupted phase diagram from its output file.
    #[arg(long)]
    resume: bool,
    /// Further settings as key=value.
    overrides: Vec<String>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", path.display()))
                })?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        for pair in &self.overrides {
            cfg.set_pair(pair)?;
        }
        let flags = [
            ("out", self.out.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("jobs", self.jobs.map(|v| v.to_string())),
            ("trials", self.trials.map(|v| v.to_string())),
            ("lambda", self.lambda.clone()),
            ("ensemble", self.ensemble.clone()),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Predict(c) => commands::predict(&c.run_config()?),
        Command::Solve(c) => commands::solve(&c.run_config()?),
        Command::PhaseDiagram(c) => commands::phase_diagram(&c.run_config()?, c.resume),
        Command::VerifyTheorem3(c) => commands::verify_theorem3(&c.run_config()?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("PHASELAB_LOG")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phaselab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
