use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use shuttle_cli::config::Experiment;
use shuttle_cli::{execute, RunRequest};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    /// Open-chain spectrum and closed-chain band ranges versus φ.
    Spectrum,
    /// Chern numbers and Berry curvature on the (k, φ) torus.
    Chern,
    /// Time integration with steady-state synchronization analysis.
    Simulate,
    /// Linear stability versus φ and of a lone shuttle versus ω.
    Stability,
    /// Stability ensembles under inter-trimer coupling disorder.
    Disorder,
    /// Fit drive and friction to the target instability windows.
    Calibrate,
}

#[derive(Debug, Parser)]
#[command(name = "shuttle-sync", version, about = "Synchronization of electron shuttles on a trimer chain")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML config; omitted keys take the preset values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let experiment = match cli.command {
        Command::Spectrum => Experiment::Spectrum,
        Command::Chern => Experiment::Chern,
        Command::Simulate => Experiment::Simulate,
        Command::Stability => Experiment::Stability,
        Command::Disorder => Experiment::Disorder,
        Command::Calibrate => Experiment::Calibrate,
    };
    let outcome = execute(&RunRequest {
        experiment,
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads,
    });
    if let Some(e) = &outcome.error {
        eprintln!("shuttle-sync {experiment}: {e}");
    }
    ExitCode::from(outcome.status.code() as u8)
}
