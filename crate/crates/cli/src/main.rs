mod commands;
mod config;
mod exit;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::output::OutputDir;

#[derive(Parser)]
#[command(name = "hamfin", version, about = "Hamiltonian option pricing, martingale and vacuum diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a payoff to the present and write price.csv and report.json
    Price(RunArgs),
    /// Martingale-state residuals over grid refinements (martingale.json)
    Martingale(RunArgs),
    /// Vacuum fields and degeneracy class (vacuum.json, optional sweep CSV)
    Vacuum(RunArgs),
    /// Similarity transform of the effective Hamiltonian (hermitize.json)
    Hermitize(RunArgs),
    /// Monte Carlo martingale test and noise-correlation sweep (mc.json)
    Simulate(RunArgs),
    /// Quartic potential vacuum manifold (ssb.json, potential.csv)
    Ssb(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides mc.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides analysis.tol
    #[arg(long)]
    tol: Option<f64>,
}

fn run(cli: Cli) -> Result<()> {
    let (args, cmd): (&RunArgs, fn(&RunConfig, &OutputDir) -> Result<()>) = match &cli.command {
        Command::Price(a) => (a, commands::price),
        Command::Martingale(a) => (a, commands::martingale),
        Command::Vacuum(a) => (a, commands::vacuum),
        Command::Hermitize(a) => (a, commands::hermitize_cmd),
        Command::Simulate(a) => (a, commands::simulate_cmd),
        Command::Ssb(a) => (a, commands::ssb),
    };
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply_overrides(args.seed, args.tol)?;
    let out = OutputDir::create(&args.out)?;
    cmd(&cfg, &out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e) as u8)
        }
    }
}
