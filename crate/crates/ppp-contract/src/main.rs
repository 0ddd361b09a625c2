//! Command-line interface: solve the optimal-contract HJB, sweep
//! volatilities, cross-validate by simulation, and report cost-positivity
//! risk, emitting CSV tables and plain-text reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ppp_contract::config::{parse_config, RunConfig};
use ppp_contract::runner;

#[derive(Parser)]
#[command(name = "ppp-contract", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Flat key-value configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's `out` key.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural assumptions of the configured function family.
    Validate(CommonArgs),
    /// Solve the HJB and emit value/policy tables.
    Solve(CommonArgs),
    /// Solve once per volatility in `sweep` and compare value functions.
    Sweep(CommonArgs),
    /// Simulate the optimal contract and cross-check both objectives.
    Simulate(CommonArgs),
    /// Report the probability that the cost process goes negative.
    Risk(CommonArgs),
}

fn load(args: &CommonArgs) -> Result<(RunConfig, PathBuf), runner::RunnerError> {
    let config = match &args.config {
        Some(path) => ppp_contract::config::load_config(path)?,
        None => parse_config("")?,
    };
    let out = args.out.clone().unwrap_or_else(|| config.out_dir.clone());
    Ok((config, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, outcome) = match &cli.command {
        Command::Validate(args) => ("validate", load(args).and_then(|(c, o)| runner::run_validate(&c, &o))),
        Command::Solve(args) => ("solve", load(args).and_then(|(c, o)| runner::run_solve(&c, &o))),
        Command::Sweep(args) => ("sweep", load(args).and_then(|(c, o)| runner::run_sweep(&c, &o))),
        Command::Simulate(args) => ("simulate", load(args).and_then(|(c, o)| runner::run_simulate(&c, &o))),
        Command::Risk(args) => ("risk", load(args).and_then(|(c, o)| runner::run_risk(&c, &o))),
    };
    match outcome {
        Ok(true) => {
            println!("{name}: all checks passed");
            ExitCode::SUCCESS
        }
        Ok(false) => {
            eprintln!("{name}: completed with failed checks (see reports)");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{name}: error: {e}");
            ExitCode::from(2)
        }
    }
}
