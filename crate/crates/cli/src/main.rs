mod commands;
mod manifest;
mod text;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Finite-time explosion analysis for stochastic differential equations.
#[derive(Debug, Parser)]
#[command(name = "blowuplab", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every applicable engine and combine the evidence into one verdict.
    Classify {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Feller's boundary test for a one-dimensional model without jumps.
    Feller {
        #[command(flatten)]
        model: ModelArgs,
        /// Anchor point of the scale function (defaults to the model setting).
        #[arg(long)]
        anchor: Option<f64>,
        /// Write (y, ln w(y)) on both sides of the anchor to DIR/outer_integrand.csv.
        #[arg(long, requires = "out")]
        csv: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Lyapunov-function conditions with every built-in candidate.
    Lyapunov {
        #[command(flatten)]
        model: ModelArgs,
        /// Write the per-shell range of LV to DIR/shells.csv.
        #[arg(long, requires = "out")]
        csv: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monte Carlo estimates of explosion and boundary-hitting probabilities.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Write sampled trajectories to DIR/paths.csv.
        #[arg(long, requires = "out")]
        csv: bool,
        /// Number of trajectories written with --csv.
        #[arg(long, default_value_t = 10)]
        csv_paths: u64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Classify the bundled example models and print a verdict table.
    Gallery {
        /// Restrict the run to these models.
        #[arg(long = "only", value_name = "NAME")]
        only: Vec<String>,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Number of simulated paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Simulation horizon T.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Machine-readable JSON on stdout.
    #[arg(long)]
    pub json: bool,
    /// Seed of every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for report files and the run manifest.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Why a run stopped early.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(String),
    Engine(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Config(_) => 2,
            Failure::Engine(_) => 3,
        }
    }
}

/// How a completed run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The final verdict is inconclusive because the evidence contradicts itself.
    Contradiction,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("BLOWUPLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| Failure::Usage(format!("BLOWUPLAB_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Engine(format!("cannot start {n} worker threads: {e}")))
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli, &argv));
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Contradiction) => ExitCode::from(4),
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Config(m) => eprintln!("configuration error: {m}"),
                Failure::Engine(m) => eprintln!("engine error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
