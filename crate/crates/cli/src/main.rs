//! `swipt`: experiment runner for information/power signal design.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 when a
//! numerical procedure fails (fit or training divergence, degenerate
//! normalization).

mod commands;
mod opts;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opts::{ConfigFile, DesignOpts, FitEhOpts, SimulateOpts, SweepOpts, TrainOpts};

#[derive(Parser, Debug)]
#[command(name = "swipt", version, about = "Signal design for simultaneous information and power transfer")]
struct Cli {
    /// TOML file with one section per subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the neural harvester model to measured or generated data.
    FitEh(FitEhOpts),
    /// Build a constellation, codebook or On-Off block code.
    Design(DesignOpts),
    /// Train an autoencoder system.
    Train(TrainOpts),
    /// Trace the rate-power tradeoff over a control grid.
    Sweep(SweepOpts),
    /// Evaluate one design or trained system by Monte Carlo.
    Simulate(SimulateOpts),
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<swipt::Error> for CliError {
    fn from(e: swipt::Error) -> Self {
        use swipt::Error as E;
        match e {
            E::FitDiverged { .. } | E::TrainingDiverged { .. } | E::Normalization => CliError::numeric(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = file.seed;
    match cli.command {
        Command::FitEh(o) => commands::fit_eh(o.merge(file.fit_eh), seed),
        Command::Design(o) => commands::design(o.merge(file.design), seed),
        Command::Train(o) => commands::train(o.merge(file.train), seed),
        Command::Sweep(o) => commands::sweep(o.merge(file.sweep), seed),
        Command::Simulate(o) => commands::simulate(o.merge(file.simulate), seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
