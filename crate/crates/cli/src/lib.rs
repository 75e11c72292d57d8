//! Command-line front end: catalog ingestion, training, prediction and
//! A2C-vs-PPO comparison.

pub mod commands;
mod error;
pub mod manifest;
pub mod source;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use orbitrl_core::rl::{Algorithm, TrainerConfig};

pub use error::{CliError, ErrorKind};

use commands::{CompareRequest, TrainRequest};
use source::load_mission;

#[derive(Debug, Parser)]
#[command(
    name = "orbitrl",
    version,
    about = "Reinforcement-learning search for LEO orbit configurations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a TLE catalog and write the accepted records.
    Ingest {
        /// File path or http(s) URL; defaults to $ORBITRL_CATALOG_URL or CelesTrak stations.
        source: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy and write metrics, checkpoints and a manifest.
    Train {
        #[arg(long, default_value = "a2c")]
        algorithm: Algorithm,
        #[arg(long)]
        mission: Option<PathBuf>,
        /// File path, http(s) URL or `builtin:iss` (default).
        #[arg(long)]
        catalog: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        timesteps: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the training recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Play one episode with a trained policy and print the final orbit.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mission: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the policy mean rather than sampled actions.
        #[arg(long, default_value_t = true, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
        deterministic: bool,
    },
    /// Train A2C and PPO on each seed and tabulate time to first success.
    Compare {
        #[arg(long)]
        mission: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 10_000)]
        a2c_timesteps: u64,
        #[arg(long, default_value_t = 70_000)]
        ppo_timesteps: u64,
        /// Directory for per-run artifacts and `comparison.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and maps
/// the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let err = CliError::usage(text.strip_prefix("error: ").unwrap_or(&text));
            eprintln!("{err}");
            return err.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            err.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { source, out } => {
            let summary = commands::ingest(source.as_deref(), &out)?;
            print!("{}", summary.report);
            Ok(())
        }
        Command::Train {
            algorithm,
            mission,
            catalog,
            seed,
            timesteps,
            out,
        } => {
            let mission = load_mission(mission.as_deref())?;
            let catalog = commands::load_catalog_arg(catalog.as_deref())?;
            let mut trainer = TrainerConfig::for_algorithm(algorithm);
            trainer.seed = seed;
            if let Some(t) = timesteps {
                trainer.total_timesteps = t;
            }
            let (manifest, _) = commands::run_training(TrainRequest {
                trainer,
                mission,
                catalog,
                out: &out,
            })?;
            print!("{}", commands::train_summary(&manifest));
            println!("artifacts written to {}", out.display());
            Ok(())
        }
        Command::Replay { manifest, out } => {
            let (manifest, _) = commands::replay(&manifest, &out)?;
            print!("{}", commands::train_summary(&manifest));
            println!("artifacts written to {}", out.display());
            Ok(())
        }
        Command::Predict {
            checkpoint,
            mission,
            catalog,
            seed,
            deterministic,
        } => {
            let mission = load_mission(mission.as_deref())?;
            let catalog = commands::load_catalog_arg(catalog.as_deref())?;
            let report = commands::predict(&checkpoint, &mission, &catalog.catalog, seed, deterministic)?;
            print!("{}", commands::format_report(&report));
            Ok(())
        }
        Command::Compare {
            mission,
            catalog,
            seeds,
            a2c_timesteps,
            ppo_timesteps,
            out,
        } => {
            if seeds.is_empty() {
                return Err(CliError::usage("--seeds needs at least one seed"));
            }
            let mission = load_mission(mission.as_deref())?;
            let catalog = commands::load_catalog_arg(catalog.as_deref())?;
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
            }
            let req = CompareRequest {
                mission: &mission,
                catalog: &catalog.catalog,
                seeds: &seeds,
                a2c_timesteps,
                ppo_timesteps,
                out: out.as_deref(),
            };
            println!("{}", commands::COMPARE_HEADER);
            let results = commands::compare(&req, |r| match r {
                Ok(row) => println!("{}", commands::compare_line(row)),
                Err(f) => eprintln!("{} seed {} failed: {}", f.algorithm, f.seed, f.error),
            });
            let table = commands::compare_table(&results);
            for line in table.lines().filter(|l| l.starts_with("median,")) {
                println!("{line}");
            }
            if let Some(dir) = &out {
                let path = dir.join("comparison.csv");
                let mut w = BufWriter::new(
                    File::create(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?,
                );
                w.write_all(table.as_bytes())
                    .and_then(|_| w.flush())
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            }
            let failed = results.iter().filter(|r| r.is_err()).count();
            if failed > 0 {
                return Err(CliError::training(format!("{failed} of {} runs failed", results.len())));
            }
            Ok(())
        }
    }
}
