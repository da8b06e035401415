//! Command-line front end for the squeezed-clock simulator.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

pub use commands::Command;
pub use config::Config;
pub use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandArg {
    Moments,
    Theory,
    Run,
    Sweep,
    Psd,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Moments => Command::Moments,
            CommandArg::Theory => Command::Theory,
            CommandArg::Run => Command::Run,
            CommandArg::Sweep => Command::Sweep,
            CommandArg::Psd => Command::Psd,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "squeezeclock",
    version,
    about = "Atomic clock servo simulator with squeezed states"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: CommandArg,
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides loop.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn load_config(path: &Path, seed: Option<u64>) -> Result<Config, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = Config::parse(&text)?;
    if let Some(s) = seed {
        config.servo.seed = s;
    }
    Ok(config)
}

/// Loads the configuration, runs the command on a pool of the requested
/// size, and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let config = load_config(&cli.config, cli.seed)?;
    if cli.threads == Some(0) {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    fs::create_dir_all(&cli.out)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| commands::execute(cli.command.into(), &config, &cli.out))
}
