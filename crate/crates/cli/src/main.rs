use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pflm_cli::config::ExperimentKind;
use pflm_cli::error::CliResult;
use pflm_cli::{plotdata, run_config_file, Overrides};

#[derive(Parser)]
#[command(
    name = "pflm",
    version,
    about = "Partially functional linear model experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config (default `results`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replicates. Outputs do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit once per sample size and write estimates and curves.
    Fit(RunArgs),
    /// Monte Carlo excess risk across the n-grid, with log-log slopes.
    Rate(RunArgs),
    /// Empirical frequencies of the concentration events.
    Concentration(RunArgs),
    /// Upper-bound constants, thresholds and observed bound coverage.
    Bounds(RunArgs),
    /// Lower-bound certificate with packing and slope-family checks.
    Minimax(RunArgs),
    /// Turn a rate or concentration CSV into per-series x,y,se files.
    Plotdata {
        /// CSV written by `rate` or `concentration`.
        csv: PathBuf,
        /// Directory for the series files (default: next to the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let (kind, args) = match cli.command {
        Command::Fit(a) => (ExperimentKind::Fit, a),
        Command::Rate(a) => (ExperimentKind::Rate, a),
        Command::Concentration(a) => (ExperimentKind::Concentration, a),
        Command::Bounds(a) => (ExperimentKind::Bounds, a),
        Command::Minimax(a) => (ExperimentKind::Minimax, a),
        Command::Plotdata { csv, out } => {
            let out = out.unwrap_or_else(|| csv.parent().map(PathBuf::from).unwrap_or_default());
            let outcome = plotdata::emit_plot_data(&csv, &out)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for f in &outcome.files {
                println!("{}", f.display());
            }
            return Ok(());
        }
    };
    let overrides = Overrides {
        seed: args.seed,
        out: args.out,
        workers: args.workers,
    };
    for f in run_config_file(kind, &args.config, &overrides)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
