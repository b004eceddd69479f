mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Run};
use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "stokeslab", version, about = "Single-component Stokes controllability laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Stokes eigenbasis, written as `basis.csv`.
    Eig,
    /// Spectral-inequality constants, sqrt-law fit and the Laplacian-component constant.
    Specineq,
    /// Observability constants over a horizon grid, exponent fit and duality check.
    Obscost,
    /// Lebeau-Robbiano controller runs and their cost curve.
    Lr,
    /// Penalized HUM controls.
    Hum,
    /// Summary of earlier `specineq` and `obscost` outputs.
    Report,
}

fn load(cli: &Cli) -> Result<Run, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| config::ConfigError::Missing("--config".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input {
        path: path.clone(),
        msg: e.to_string(),
    })?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Run { config, out })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|run| match cli.command {
        Command::Eig => commands::eig(&run),
        Command::Specineq => commands::specineq(&run),
        Command::Obscost => commands::obscost(&run),
        Command::Lr => commands::lr(&run),
        Command::Hum => commands::hum(&run),
        Command::Report => commands::report(&run),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
