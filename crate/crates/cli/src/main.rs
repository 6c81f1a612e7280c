//! `qlwave`: command-line driver for the lifespan toolkit.
//!
//! Every subcommand reads one JSON problem file, writes
//! `resolved_config.json`, `report.json` and its CSV tables into the output
//! directory, and exits with 0 on success, 1 on a domain or input error and 2
//! on a numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "qlwave",
    version,
    about = "Lifespan toolkit for 2-D quasilinear wave systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Symmetry, structure and null-condition checks on the coefficients
    CheckNull(Common),
    /// Tabulate the radiation field of every component
    Radiation(Common),
    /// Blow-up constant H and predicted lifespans
    Lifespan(Common),
    /// Integrate the model Riccati equation along one characteristic
    Riccati(Common),
    /// Evolve the system with the finite-difference solver
    Simulate(Common),
    /// Compare simulated lifespans against the prediction over a list of amplitudes
    ScalingStudy(Common),
}

#[derive(Args)]
struct Common {
    /// JSON problem file
    config: PathBuf,
    /// output directory, overriding `output_dir` in the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// run even if the symmetry or structure checks fail
    #[arg(long)]
    allow_violations: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<qlwave::Error>() {
        Some(qlwave::Error::Numerical(_) | qlwave::Error::BoundExpired { .. }) => 2,
        _ => 1,
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("QLWAVE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("QLWAVE_THREADS must be a thread count, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let (cmd, common): (commands::Kind, Common) = match cli.command {
        Command::CheckNull(c) => (commands::Kind::CheckNull, c),
        Command::Radiation(c) => (commands::Kind::Radiation, c),
        Command::Lifespan(c) => (commands::Kind::Lifespan, c),
        Command::Riccati(c) => (commands::Kind::Riccati, c),
        Command::Simulate(c) => (commands::Kind::Simulate, c),
        Command::ScalingStudy(c) => (commands::Kind::ScalingStudy, c),
    };
    let mut cfg = config::parse_config(&common.config)?;
    if let Some(out) = common.out {
        cfg.output_dir = std::path::absolute(out)?;
    }
    cfg.allow_assumption_violations |= common.allow_violations;
    commands::dispatch(cmd, &cfg)
}
