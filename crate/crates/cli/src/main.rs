use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use covmimo::parallel::with_workers;
use covmimo::runner::{
    run_mse_sweep, run_se_sweep, run_validation_with, validation_passed, write_csv, write_csv_to, ExperimentConfig,
    ResultRow, ValidationScale,
};

/// Massive-MIMO uplink simulator with estimated covariance matrices.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalized channel-estimation MSE against the number of extra pilots.
    MseSweep(RunArgs),
    /// Sum spectral efficiency with MRC and RZF against the number of extra pilots.
    SeSweep(RunArgs),
    /// Brute-force checks of the closed-form expressions; exits nonzero on failure.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with flat key = value settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; overrides the config file. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Reduced Monte-Carlo effort for smoke runs.
    #[arg(long)]
    quick: bool,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_path = Some(out.clone());
        }
        if self.quick {
            config = config.quick();
        }
        config.validate()?;
        Ok(config)
    }
}

fn emit(rows: &[ResultRow], config: &ExperimentConfig) -> anyhow::Result<()> {
    match &config.output_path {
        Some(path) => {
            write_csv(rows, path)?;
            log::info!("wrote {} rows to {}", rows.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_csv_to(rows, &mut lock).context("writing CSV to stdout")?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let args = match &cli.command {
        Command::MseSweep(a) | Command::SeSweep(a) | Command::Validate(a) => a,
    };
    let config = args.config()?;
    let rows = with_workers(args.workers, || match &cli.command {
        Command::MseSweep(_) => run_mse_sweep(&config),
        Command::SeSweep(_) => run_se_sweep(&config),
        Command::Validate(_) => {
            let scale = if args.quick {
                ValidationScale::QUICK
            } else {
                ValidationScale::FULL
            };
            run_validation_with(&config, scale)
        }
    })?;
    emit(&rows, &config)?;
    if matches!(cli.command, Command::Validate(_)) && !validation_passed(&rows) {
        log::error!("validation failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
