use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use droop_incentive::ErrorKind;

mod commands;
mod manifest;

/// Droop-coefficient incentive mechanism for multi-infeed HVDC support.
#[derive(Debug, Parser)]
#[command(name = "droop-incentive", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    /// Price convergence tolerance.
    #[arg(long, env = "DROOP_INCENTIVE_EPS_GAMMA", default_value_t = 1e-10)]
    pub eps_gamma: f64,
    /// Droop convergence tolerance (MW/Hz).
    #[arg(long, env = "DROOP_INCENTIVE_EPS_K", default_value_t = 1e-8)]
    pub eps_k: f64,
    /// Round limit for the fixed-point iteration.
    #[arg(long, env = "DROOP_INCENTIVE_MAX_ITERS", default_value_t = 10_000)]
    pub max_iters: usize,
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArg {
    /// System and fault-set configuration (JSON).
    #[arg(long, env = "DROOP_INCENTIVE_CONFIG")]
    pub config: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a configuration file and print a summary.
    Validate {
        config: PathBuf,
    },
    /// Seek the equilibrium for one fault.
    Equilibrium {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        fault: String,
        /// Expected main-grid frequency deviation (Hz); defaults to the config value.
        #[arg(long, env = "DROOP_INCENTIVE_OMEGA", allow_hyphen_values = true)]
        omega: Option<f64>,
        #[arg(long)]
        gamma0: Option<f64>,
        /// Initial droop vector, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        k0: Option<Vec<f64>>,
        /// Use the closed-form interior solution instead of iterating.
        #[arg(long)]
        analytic: bool,
        /// Directory for equilibrium.csv, trace.csv and manifest.json.
        #[arg(long, env = "DROOP_INCENTIVE_OUT")]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Build the equilibrium curves and the pre-payment schedule.
    Mechanism {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, env = "DROOP_INCENTIVE_OMEGA", allow_hyphen_values = true)]
        omega: Option<f64>,
        /// Directory for curves.csv, schedule.json and manifest.json.
        #[arg(long, env = "DROOP_INCENTIVE_OUT")]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Decide the real-time droop adjustment for a realized imbalance.
    Adjust {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        curves: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        /// Realized power imbalance (MW, positive for a shortage).
        #[arg(long, allow_hyphen_values = true)]
        realized: f64,
        /// Generator tripped by the realized fault; inferred from the fault set when omitted.
        #[arg(long)]
        trip: Option<String>,
        /// Directory for decision.json and manifest.json.
        #[arg(long, env = "DROOP_INCENTIVE_OUT")]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Equilibria over a range of expected frequency deviations.
    SweepOmega {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        fault: String,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// Directory for sweep.csv and manifest.json.
        #[arg(long, env = "DROOP_INCENTIVE_OUT")]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run the price/droop message exchange between separate agents.
    Decentralized {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        fault: String,
        #[arg(long, env = "DROOP_INCENTIVE_OMEGA", allow_hyphen_values = true)]
        omega: Option<f64>,
        /// Directory for result.json, transcript.jsonl and manifest.json.
        #[arg(long, env = "DROOP_INCENTIVE_OUT")]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Parse => 2,
        ErrorKind::Invariant => 3,
        ErrorKind::Domain => 4,
        ErrorKind::NonConvergence => 5,
        ErrorKind::Io => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(err.kind()))
        }
    }
}
