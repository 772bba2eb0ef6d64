//! Laboratory driver: Green's-function tables, expansion verification,
//! ε continuation sweeps and snapshot fits, all driven by one JSON config.

use bubble_lab::commands::{cmd_fit, cmd_greens, cmd_sweep, cmd_verify};
use bubble_lab::config::LabConfig;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bubble-lab", version, about = "Torus bubble laboratory")]
struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Grid size override (power of two >= 64).
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// RNG seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the torus Green's function and cross-validate the 𝒥 constant.
    Greens,
    /// Verify the closed-form energy expansions by quadrature.
    Verify,
    /// Run the ε continuation sweep and fit the bubbling scaling law.
    Sweep,
    /// Recover bubble parameters from a stored field snapshot.
    Fit {
        /// Path to the snapshot payload (the .bin file).
        snapshot: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => match LabConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(1);
            }
        },
        None => LabConfig::default(),
    };
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    if let Some(grid) = cli.grid {
        config.grid_n = grid;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Err(e) = config.validate() {
        eprintln!("config error: {e}");
        return ExitCode::from(1);
    }

    let result = match &cli.command {
        Command::Greens => cmd_greens(&config),
        Command::Verify => cmd_verify(&config),
        Command::Sweep => cmd_sweep(&config),
        Command::Fit { snapshot } => cmd_fit(&config, snapshot),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
