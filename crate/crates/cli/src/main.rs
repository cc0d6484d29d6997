mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

/// Random dynamical decoupling experiments: pulse walks, analytic fidelity curves, decoherence classification.
#[derive(Parser)]
#[command(name = "decoq", version)]
struct Cli {
    /// Worker threads for path ensembles (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo walks named in the config and write path files, curves and a manifest.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write analytic mean, variance, drift and bound curves.
    Analytic {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify decoherence from curves at three or more pulse periods.
    Classify {
        curve_dir: PathBuf,
        bounds_file: PathBuf,
        /// Run name to use when the directory holds several (e.g. `physical`, `extrinsic_physical`).
        #[arg(long)]
        run: Option<String>,
    },
    /// Parse and check a config without running anything.
    ValidateConfig { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        set_threads(n)?;
    }
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let loaded = config::load(&config)?;
            let env = std::env::var("DECOQ_SEED").ok();
            let seed = commands::resolve_seed(seed, env.as_deref(), loaded.config.seed)?;
            let dir = commands::simulate(&loaded, seed, out.as_deref())?;
            eprintln!("wrote {}", dir.display());
        }
        Command::Analytic { config, out } => {
            let loaded = config::load(&config)?;
            let dir = commands::analytic(&loaded, out.as_deref())?;
            eprintln!("wrote {}", dir.display());
        }
        Command::Classify { curve_dir, bounds_file, run } => {
            let verdict = commands::classify_dir(&curve_dir, &bounds_file, run.as_deref())?;
            commands::print_json(&verdict)?;
        }
        Command::ValidateConfig { config } => {
            let loaded = config::load(&config)?;
            println!(
                "ok: dim {}, |J| = {}, {} grid times, {} paths",
                loaded.config.system.dim,
                loaded.set.len(),
                loaded.config.walk.t_grid.len(),
                loaded.config.walk.paths
            );
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Config("--threads: must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Other(format!("thread pool: {e}")))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Config("--threads: must be >= 1".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
