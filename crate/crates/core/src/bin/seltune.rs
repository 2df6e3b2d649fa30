//! Command-line front end: `run`, `resume`, `report`, and a stdio surrogate
//! trainer for exercising the process transport.
//!
//! Log verbosity is taken from `SELTUNE_LOG` (e.g. `SELTUNE_LOG=debug`).
//! Exit status: 0 success, 2 config/checkpoint error, 3 trainer failure,
//! 4 I/O or internal error.

use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seltune::orchestrator::{self, report, RunError, RunOptions};
use seltune::protocol::serve::{serve, Faults};
use seltune::protocol::MaskMatchSurrogate;

#[derive(Debug, Parser)]
#[command(name = "seltune", version, about = "Evolutionary search for selective fine-tuning configurations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a search described by a TOML config file.
    Run {
        config: PathBuf,
        /// Stop with a checkpoint after this many generations.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Continue a run from its checkpoint.
    Resume {
        checkpoint: PathBuf,
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Summarize a run directory and check its artifacts.
    Report { dir: PathBuf },
    /// Answer evaluation requests on stdin/stdout with a mask-match surrogate.
    ServeSurrogate {
        /// Number of blocks.
        #[arg(long)]
        blocks: usize,
        /// Base learning rate of every block.
        #[arg(long, default_value_t = 0.01)]
        base_rate: f64,
        /// Seed of the random target configuration.
        #[arg(long, default_value_t = 0)]
        instance_seed: u64,
        /// Standard deviation of the per-trial accuracy noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Write garbage before every n-th response.
        #[arg(long, default_value_t = 0)]
        garbage_every: u64,
        /// Write a truncated copy before every n-th response.
        #[arg(long, default_value_t = 0)]
        truncate_every: u64,
        /// Duplicate every n-th response.
        #[arg(long, default_value_t = 0)]
        duplicate_every: u64,
        /// Fail every n-th request.
        #[arg(long, default_value_t = 0)]
        fail_every: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SELTUNE_LOG", "info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: Command) -> Result<(), RunError> {
    match command {
        Command::Run { config, stop_after } => {
            let outcome = orchestrator::run_command(&config, &RunOptions { stop_after })?;
            println!(
                "{} generation(s) done{}; artifacts in {}",
                outcome.generations_done,
                if outcome.finished { "" } else { " (incomplete)" },
                outcome.output_dir.display()
            );
        }
        Command::Resume { checkpoint, stop_after } => {
            let outcome = orchestrator::resume_command(&checkpoint, &RunOptions { stop_after })?;
            println!(
                "{} generation(s) done{}; artifacts in {}",
                outcome.generations_done,
                if outcome.finished { "" } else { " (incomplete)" },
                outcome.output_dir.display()
            );
        }
        Command::Report { dir } => {
            let summary = report::report_command(&dir)?;
            print!("{summary}");
            if !summary.is_consistent() {
                return Err(RunError::Internal(format!(
                    "{} artifact consistency problem(s)",
                    summary.problems.len()
                )));
            }
        }
        Command::ServeSurrogate {
            blocks,
            base_rate,
            instance_seed,
            noise,
            garbage_every,
            truncate_every,
            duplicate_every,
            fail_every,
        } => {
            if blocks == 0 || !(base_rate.is_finite() && base_rate > 0.0) || !(noise.is_finite() && noise >= 0.0) {
                return Err(RunError::Config(
                    "serve-surrogate: need blocks >= 1, base_rate > 0, noise >= 0".into(),
                ));
            }
            let surrogate = MaskMatchSurrogate::random(blocks, instance_seed, noise);
            let faults = Faults {
                garbage_every,
                truncate_every,
                duplicate_every,
                fail_every,
            };
            let stats = serve(io::stdin().lock(), io::stdout().lock(), &surrogate, &vec![base_rate; blocks], faults)
                .map_err(|source| RunError::Io {
                    path: PathBuf::from("<stdio>"),
                    source,
                })?;
            log::info!("served {} request(s), rejected {}", stats.requests, stats.rejected);
        }
    }
    Ok(())
}
