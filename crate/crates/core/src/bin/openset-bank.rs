use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use openset_bank::experiment::{ExperimentConfig, RunError};
use openset_bank::report::{describe_bank, render_report, run_to_dir};
use openset_bank::MemoryBank;

#[derive(Parser)]
#[command(version, about = "Memory-bank experiments on the synthetic open-set benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed; overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        snapshot_every: Option<usize>,
    },
    /// Print a summary of a bank snapshot.
    InspectBank {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Re-render metrics.csv in a run directory as report.json.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run {
            config,
            out,
            seed,
            snapshot_every,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| RunError::Config(format!("{}: {e}", config.display())))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = snapshot_every {
                cfg.snapshot_every = n;
            }
            let out = out
                .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
                .ok_or_else(|| RunError::Config("no output directory given".into()))?;
            let report = run_to_dir(&cfg, &out)?;
            println!(
                "wrote {} evaluation rows to {}",
                report.rows.len() + usize::from(report.final_row.is_some()),
                out.display()
            );
        }
        Command::InspectBank { snapshot } => {
            let bytes = std::fs::read(&snapshot)?;
            let bank = MemoryBank::load_snapshot(&bytes).map_err(|e| RunError::Config(e.to_string()))?;
            print!("{}", describe_bank(&bank));
        }
        Command::Report { out } => {
            render_report(&out)?;
            println!("wrote {}", out.join("report.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                RunError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
