mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Simulate and certify L1 adaptive control scenarios.
#[derive(Debug, Parser)]
#[command(name = "l1ac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (TOML).
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write SVG line charts of the traces.
    #[arg(long)]
    pub plot: bool,
    /// Use the induced-norm D_ω instead of the trace form.
    #[arg(long)]
    pub strict_norm_bounds: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation and write trace.csv and summary.json.
    Simulate(Common),
    /// Compute the certificate; exit 3 when it is infeasible.
    Certify(Common),
    /// Linear: run against the certified bounds. Aircraft: baseline-only vs with-L1.
    Compare(Common),
    /// Monte Carlo sweep over sampled uncertainty realizations.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Overrides the number of runs in the scenario.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Tabulate the sampling-time condition and the δ bounds over Ts.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// `lo:hi:n`, n evenly spaced sampling times.
        #[arg(long)]
        ts_sweep: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Certify(c) => commands::certify(c),
        Command::Compare(c) => commands::compare(c),
        Command::Sweep { common, runs } => commands::sweep(common, *runs),
        Command::Bounds { common, ts_sweep } => commands::bounds(common, ts_sweep.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
