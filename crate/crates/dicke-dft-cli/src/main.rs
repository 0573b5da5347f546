//! Command-line driver for the dicke-dft toolkit.
//!
//! Exit codes: 0 success, 1 numerical failure (or failed diagnostics),
//! 2 configuration error, 3 sizing error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{CliError, Ctx, Format};
use config::RunConfig;

/// Thread-count environment variable, honored when --threads is absent.
const THREADS_ENV: &str = "DICKE_DFT_THREADS";

#[derive(Parser)]
#[command(
    name = "dicke-dft",
    version,
    about = "Exact-diagonalization density-functional toolkit for multi-mode Dicke models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration (required by every command except diagnose).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (defaults to DICKE_DFT_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Low-lying spectrum of H(v,j).
    Spectrum,
    /// Universal-functional curves F(sigma, xi) over a sigma grid per coupling.
    Curve,
    /// Functional values at explicit density-pair targets.
    Functional,
    /// Adiabatic-connection integration and reconstruction.
    Adiabatic,
    /// Regular-set hyperplane arrangement and component count.
    #[command(name = "regular-set")]
    RegularSet,
    /// Identity battery; exits nonzero when any check fails.
    Diagnose,
    /// Hohenberg-Kohn injectivity scan over a potential grid.
    #[command(name = "hk-scan")]
    HkScan,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    });
}

fn run(cli: Cli) -> Result<i32, CliError> {
    configure_threads(cli.threads);
    let config = load_config(&cli)?;
    let ctx = Ctx {
        config,
        seed: cli.seed,
        format: cli.format,
        out_dir: cli.out.clone(),
    };
    match cli.command {
        Command::Spectrum => commands::cmd_spectrum(&ctx),
        Command::Curve => commands::cmd_curve(&ctx),
        Command::Functional => commands::cmd_functional(&ctx),
        Command::Adiabatic => commands::cmd_adiabatic(&ctx),
        Command::RegularSet => commands::cmd_regular_set(&ctx),
        Command::Diagnose => commands::cmd_diagnose(&ctx),
        Command::HkScan => commands::cmd_hk_scan(&ctx),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CliError::Config),
        None => match cli.command {
            // the battery is self-contained; echo its reference model
            Command::Diagnose => RunConfig::from_toml_str(
                "[model]\nn_spins = 1\nn_modes = 1\ncoupling = [[1.0]]\ntunneling = [1.0]\n",
            )
            .map_err(CliError::Config),
            _ => Err(CliError::Config("--config <path> is required".into())),
        },
    }
}

fn configure_threads(flag: Option<usize>) {
    let count = flag.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
    });
    if let Some(n) = count {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}
