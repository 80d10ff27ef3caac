//! `riscovert`: dataset generation, detector training, perturbation sweeps,
//! correlation analysis and codeword selection for one RIS topology.
//!
//! Exit codes: 0 success, 2 configuration or output-directory error,
//! 3 missing or corrupt artifact, 4 numerical failure.

mod commands;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riscovert::{Error, RunConfig, Side};

#[derive(Debug, Parser)]
#[command(name = "riscovert", version, about = "RIS-assisted covert communication simulator")]
struct Cli {
    /// TOML run configuration; omitted keys take the reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Uses the full-size dataset recipe.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Overrides the Monte-Carlo trials per grid cell.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Checks artifact digests against the manifest after the command.
    #[arg(long, global = true)]
    verify: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generates the receiver and eavesdropper training datasets.
    GenData,
    /// Trains a detector on its dataset (both sides when --side is omitted).
    Train {
        /// Detector to train: rx or eve
        #[arg(long)]
        side: Option<Side>,
    },
    /// Detection probabilities over codewords and perturbation powers.
    Sweep,
    /// Correlation between receiver SNR and detection at both sides.
    Correlate,
    /// Covert codeword choice at the selection power.
    SelectRis,
    /// Re-derives the config hash and artifact digests and compares them with the manifest.
    Verify,
}

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn artifact(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Library errors raised while computing (not while reading artifacts).
impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Self::config(e.to_string()),
            Error::Format(_) | Error::InvalidDataset(_) => Self::artifact(e.to_string()),
            Error::Io(_) => Self::config(e.to_string()),
            Error::DegenerateChannel(_) | Error::ZeroGradient | Error::UndefinedCorrelation(_) => {
                Self::numeric(e.to_string())
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::config(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(trials) = cli.trials {
        cfg.sweep.n_trials = trials;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let _lock = manifest::DirLock::acquire(&cfg.output_dir)?;
    match &cli.command {
        Command::GenData => commands::gen_data(&cfg)?,
        Command::Train { side } => match side {
            Some(side) => commands::train(&cfg, *side)?,
            None => Side::BOTH.iter().try_for_each(|s| commands::train(&cfg, *s))?,
        },
        Command::Sweep => commands::sweep(&cfg)?,
        Command::Correlate => commands::correlate(&cfg)?,
        Command::SelectRis => commands::select_ris(&cfg)?,
        Command::Verify => return commands::verify(&cfg),
    }
    if cli.verify {
        commands::verify(&cfg)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
