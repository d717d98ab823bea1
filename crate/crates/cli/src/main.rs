mod oracle;
mod polymer_check;
mod report;
mod runner;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use kpzlab::config::ExperimentConfig;
use kpzlab::{ErrorClass, KpzError};
use std::path::PathBuf;
use std::process::ExitCode;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_REGIME: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_ACCEPTANCE: u8 = 5;

#[derive(Parser)]
#[command(name = "kpzlab", version, about = "Mollified 2D KPZ experiments")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "KPZLAB_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print limit-law quantities.
    Oracle(oracle::OracleArgs),
    /// Run one scale and write sample sets, a report and a manifest.
    Simulate(RunArgs),
    /// Compare the polymer estimators with the lattice solver.
    PolymerCheck(RunArgs),
    /// Run an eps sweep and write the trend report.
    Sweep(RunArgs),
    /// Recompute the report of an output directory.
    Report(report::ReportArgs),
}

#[derive(Args, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Continue from the checkpoint in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Replica whose environment the polymer check freezes.
    #[arg(long, default_value_t = 0)]
    pub replica: u64,
}

impl RunArgs {
    pub fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let out = self.out_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
        cfg.out_dir = out.to_string_lossy().into_owned();
        Ok((cfg, out))
    }
}

/// A check that ran and failed.
#[derive(Debug)]
pub struct AcceptanceFailure(pub String);

impl std::fmt::Display for AcceptanceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "acceptance failure: {}", self.0)
    }
}

impl std::error::Error for AcceptanceFailure {}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<AcceptanceFailure>().is_some() {
        return EXIT_ACCEPTANCE;
    }
    match e.downcast_ref::<KpzError>().map(|k| k.class()) {
        Some(ErrorClass::Config) => EXIT_CONFIG,
        Some(ErrorClass::Regime) => EXIT_REGIME,
        Some(ErrorClass::Numerical) => EXIT_NUMERICAL,
        Some(ErrorClass::Io) | None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            eprintln!("kpzlab: worker pool: {e}");
        }
    }
    let result = match cli.cmd {
        Command::Oracle(a) => oracle::run(&a),
        Command::Simulate(a) => runner::simulate(&a),
        Command::Sweep(a) => runner::sweep(&a),
        Command::PolymerCheck(a) => polymer_check::run(&a),
        Command::Report(a) => report::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kpzlab: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
