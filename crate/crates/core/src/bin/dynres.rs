use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dynres::config::{load_config, SimSettings, SweepConfig};
use dynres::sweep::{emit_csv, run_sweep};

/// Blocking and utilization sweeps for dynamic channel reservation.
#[derive(Debug, Parser)]
#[command(name = "dynres", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic curves only; simulation settings are ignored.
    Analytic(RunArgs),
    /// Analytic curves plus simulation, whether or not the config enables it.
    Simulate(RunArgs),
    /// Runs exactly what the config asks for.
    Sweep(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Sweep configuration file.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// CSV destination, overriding `output` in the config.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Single seed replacing the configured seed list.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn prepare(command: Command) -> Result<(SweepConfig, PathBuf), String> {
    let (args, simulate) = match command {
        Command::Analytic(args) => (args, Some(false)),
        Command::Simulate(args) => (args, Some(true)),
        Command::Sweep(args) => (args, None),
    };
    let mut config = load_config(&args.config).map_err(|e| e.to_string())?;
    match simulate {
        Some(false) => config.simulation = None,
        Some(true) if config.simulation.is_none() => {
            config.simulation = Some(SimSettings::default())
        }
        _ => {}
    }
    if let Some(seed) = args.seed {
        config.override_seed(seed);
    }
    let out = args
        .out
        .or_else(|| config.output.clone())
        .ok_or_else(|| "no output path: pass --out or set `output` in the config".to_string())?;
    Ok((config, out))
}

fn run(config: &SweepConfig, out: &Path) -> Result<usize, String> {
    let rows = run_sweep(config).map_err(|e| e.to_string())?;
    emit_csv(&rows, out).map_err(|e| e.to_string())?;
    Ok(rows.len())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (config, out) = match prepare(cli.command) {
        Ok(prepared) => prepared,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match run(&config, &out) {
        Ok(rows) => {
            eprintln!("wrote {rows} rows to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
