use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Joint offloading and step allocation solver.
#[derive(Debug, Parser)]
#[command(name = "offload", version)]
pub struct Cli {
    /// Print more progress (-v: per-record, -vv: solver trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output file. `.json` selects JSON, anything else CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one configuration.
    Solve(Common),
    /// Run a sweep plan (or a single sweep spec).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Record measured wall times. Output then differs between runs.
        #[arg(long)]
        timing: bool,
    },
    /// Solve and compare against brute-force enumeration.
    CompareOracle {
        #[command(flatten)]
        common: Common,
        /// Step grid spacing of the brute-force search.
        #[arg(long, default_value_t = 1.0)]
        grid_step: f64,
    },
    /// Evaluate the random baseline allocation.
    Baseline(Common),
    /// Print the default configuration, or a study plan built on it.
    PrintDefaultConfig {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Consumption study: weight presets and baseline over the budget grid.
    Fig1,
    /// Utility study: three local caps over the budget grid.
    Fig2,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    ExitCode::from(commands::run(cli))
}
