//! `qfk`: command-line front end for the kernel toolkit. Each subcommand
//! reads a JSON config, runs one workflow, and writes plot-ready CSV/JSON
//! into the output directory. Exit codes: 0 success, 2 config error,
//! 3 data error, 4 numerical failure.

mod commands;
mod config;
mod error;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{BacktestCliConfig, GenerateConfig, PriceExtrapolateConfig, ReverseStressConfig};
use error::{CliError, Result};

#[derive(Parser)]
#[command(name = "qfk", version, about = "Kernel-based pricing, stress testing, path generation and backtesting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config `out_dir`, then the QFK_OUT
    /// environment variable, then the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a pricer on stress scenarios and benchmark the extrapolation.
    PriceExtrapolate(RunArgs),
    /// Invert PnL targets back to scenarios and report repricing errors.
    ReverseStress(RunArgs),
    /// Generate synthetic paths from a fitted noise-map model.
    Generate(RunArgs),
    /// Run portfolio strategies over a historical dataset.
    Backtest(RunArgs),
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config::parse(&text)
}

fn resolve_out(flag: Option<PathBuf>, config_dir: Option<PathBuf>) -> Result<PathBuf> {
    let out = flag
        .or_else(|| std::env::var_os("QFK_OUT").map(PathBuf::from))
        .or(config_dir)
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::PriceExtrapolate(args) => {
            let mut cfg: PriceExtrapolateConfig = read_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let out = resolve_out(args.out, cfg.out_dir.clone())?;
            commands::price_extrapolate::run(&cfg, &out)
        }
        Command::ReverseStress(args) => {
            let mut cfg: ReverseStressConfig = read_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let out = resolve_out(args.out, cfg.out_dir.clone())?;
            commands::reverse_stress::run(&cfg, &out)
        }
        Command::Generate(args) => {
            let mut cfg: GenerateConfig = read_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let out = resolve_out(args.out, cfg.out_dir.clone())?;
            commands::generate::run(&cfg, &out)
        }
        Command::Backtest(args) => {
            let mut cfg: BacktestCliConfig = read_config(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            let out = resolve_out(args.out, cfg.out_dir.clone())?;
            commands::backtest::run(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
