//! Command-line runner: validate configs, execute experiments, aggregate
//! results.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 numerical
//! failure, 4 I/O failure.

use clap::{Parser, Subcommand};
use meanfield_core::config::ExperimentConfig;
use meanfield_core::{experiments, report, Error};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "meanfield",
    about = "Brownian particles with mollified Coulomb repulsion: simulator and verification harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file.
    Run {
        /// TOML experiment description.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for seed-parallel ensembles (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        /// Offset added to every seed in the config.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Parse and validate a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Aggregate a results directory into summary and acceptance tables.
    Report {
        /// Directory previously populated by `run`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> meanfield_core::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            seed_offset,
        } => {
            let text = std::fs::read_to_string(&config)?;
            let parsed = ExperimentConfig::from_toml(&text)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&parsed.output.dir));
            let manifest = experiments::run(&parsed, &text, &out_dir, workers, seed_offset)?;
            println!("wrote {}", manifest.display());
            Ok(())
        }
        Command::Validate { config } => {
            let text = std::fs::read_to_string(&config)?;
            let parsed = ExperimentConfig::from_toml(&text)?;
            println!(
                "ok: kind = {}, seeds = {:?}",
                parsed.kind.as_str(),
                parsed.seed_list(0)
            );
            Ok(())
        }
        Command::Report { out } => {
            if !out.is_dir() {
                return Err(Error::InvalidInput(format!(
                    "results directory {} does not exist",
                    out.display()
                )));
            }
            let (summaries, criteria) = report::generate(&out)?;
            for s in &summaries {
                println!(
                    "{}/{}: median {:.6e} [q25 {:.6e}, q75 {:.6e}] over {}",
                    s.group, s.metric, s.median, s.q25, s.q75, s.count
                );
            }
            for c in &criteria {
                println!("{}", c.render());
            }
            println!(
                "wrote {} and {}",
                out.join("summary.csv").display(),
                out.join("acceptance.csv").display()
            );
            Ok(())
        }
    }
}
