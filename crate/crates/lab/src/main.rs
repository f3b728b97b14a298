use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nvi_lab::runner::{self, Axis};
use nvi_lab::{report, ExperimentConfig, LabError};

/// Value-iteration regret laboratory.
#[derive(Parser)]
#[command(name = "nvi-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Run one experiment per value of a parameter.
    Sweep {
        config: PathBuf,
        /// One of T, alpha, epsilon, m, L, seed.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write plots and a summary for a run or sweep directory.
    Report { dir: PathBuf },
}

fn execute(cli: Cli) -> Result<(), LabError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = runner::run(&cfg)?;
            println!(
                "{}: {} episodes, cumulative regret {:.4}",
                out.dir.display(),
                out.output.ledger.len(),
                out.output.summary.final_cum_regret
            );
        }
        Command::Sweep {
            config,
            axis,
            values,
            jobs,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let axis = Axis::parse(&axis)?;
            let values = runner::parse_values(&values)?;
            let dir = runner::output_dir(&cfg);
            let rows = runner::sweep(&cfg, axis, &values, jobs, &dir)?;
            println!("{}: {} summary rows", dir.display(), rows.len());
        }
        Command::Report { dir } => {
            for path in report::report(&dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = e.record();
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(record.exit_code as u8)
        }
    }
}
