use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pairloss::run::{run_path, RunOptions};

/// Steady states, entanglement and squeezing spectra of two cavity modes
/// with engineered pair loss.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Exit with status 4 when the Fock cutoff is too small.
    #[arg(long)]
    strict_cutoff: bool,
    /// Steady-state residual bound, overriding the config.
    #[arg(long)]
    tolerance: Option<f64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = RunOptions { out_dir: cli.out, workers: cli.workers, strict_cutoff: cli.strict_cutoff, tolerance: cli.tolerance };
    ExitCode::from(run_path(&cli.config, &opts) as u8)
}
