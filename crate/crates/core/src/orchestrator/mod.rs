//! Run lifecycle: configuration, trainer setup, checkpointing and artifacts.

pub mod artifacts;
pub mod config;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, EngineError, EngineState, FoldTransport};
use crate::fitness::FitnessError;
use crate::partition::{build_partition, PartitionPlan};
use crate::protocol::{MaskMatchSurrogate, ProcessTrainer, SphereSurrogate, Trainer};

pub use config::{RunConfig, SurrogateName, TrainerKind, Transport};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PLAN_FILE: &str = "partition.json";
const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("trainer failure: {0}")]
    Trainer(String),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl RunError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Checkpoint { .. } => 2,
            RunError::Trainer(_) => 3,
            RunError::Io { .. } | RunError::Internal(_) => 4,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl From<EngineError> for RunError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Fitness(FitnessError::Endpoint { .. }) => RunError::Trainer(e.to_string()),
            EngineError::Config(_) | EngineError::FoldMismatch { .. } => RunError::Config(e.to_string()),
            other => RunError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub config_path: PathBuf,
    pub config_digest: String,
    pub plan_digest: String,
    pub finished: bool,
    pub state: EngineState,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let bytes = fs::read(path).map_err(|e| RunError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let cp: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| RunError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(RunError::Checkpoint {
                path: path.to_path_buf(),
                reason: format!("unsupported checkpoint format {}", cp.format),
            });
        }
        Ok(cp)
    }

    /// Writes to a temporary file and renames it into place.
    pub fn store(&self, path: &Path) -> Result<(), RunError> {
        let bytes = serde_json::to_vec(self).map_err(|e| RunError::Internal(e.to_string()))?;
        write_atomic(path, &bytes)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn build_plan(config: &RunConfig) -> Result<PartitionPlan, RunError> {
    build_partition(&config.labels, config.engine.fold_count, config.partition_seed)
        .map_err(|e| RunError::Config(format!("partition: {e}")))
}

/// Instantiates the configured trainer endpoint.
pub fn build_endpoint(config: &RunConfig) -> Result<Box<dyn Trainer>, RunError> {
    let t = &config.trainer;
    let blocks = config.blocks.block_count();
    match t.kind {
        TrainerKind::Process => {
            let mut command = t.command.clone();
            // Relative program paths resolve against the config directory.
            let program = PathBuf::from(&command[0]);
            if program.components().count() > 1 && program.is_relative() {
                command[0] = config.base_dir.join(program).display().to_string();
            }
            let spawned = ProcessTrainer::spawn(&command, Some(&config.base_dir), t.settings());
            let p = spawned.map_err(|e| RunError::Trainer(format!("launching {:?}: {e}", t.command)))?;
            Ok(Box::new(p))
        }
        TrainerKind::Surrogate => match t.surrogate.expect("validated") {
            SurrogateName::MaskMatch => {
                let s = match (&t.target_mask, &t.target_exponents) {
                    (Some(m), Some(e)) => MaskMatchSurrogate::new(m.clone(), e.clone(), t.noise),
                    (None, None) => MaskMatchSurrogate::random(blocks, t.instance_seed, t.noise),
                    _ => {
                        return Err(RunError::Config(
                            "trainer: target_mask and target_exponents go together".into(),
                        ))
                    }
                };
                Ok(Box::new(s.with_settings(t.settings())))
            }
            SurrogateName::Sphere => {
                let s = match &t.optimum {
                    Some(o) => SphereSurrogate::new(o.clone()),
                    None => SphereSurrogate::random(blocks + 1, t.instance_seed),
                };
                Ok(Box::new(s.with_settings(t.settings())))
            }
        },
    }
}

/// Options for [`run_command`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop (with a checkpoint) once this many generations are complete.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub generations_done: usize,
    pub finished: bool,
}

/// Runs a search from scratch as described by the config file.
pub fn run_command(config_path: &Path, options: &RunOptions) -> Result<RunOutcome, RunError> {
    let config = RunConfig::load(config_path)?;
    let plan = build_plan(&config)?;
    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let state = EngineState::initial(&config.engine, config.blocks.block_count());
    drive(&config, &plan, state, options)
}

/// Continues a run from its checkpoint. A finished run is left untouched.
pub fn resume_command(checkpoint_path: &Path, options: &RunOptions) -> Result<RunOutcome, RunError> {
    let cp = Checkpoint::load(checkpoint_path)?;
    let config = RunConfig::load(&cp.config_path)?;
    if config.digest != cp.config_digest {
        return Err(RunError::Checkpoint {
            path: checkpoint_path.to_path_buf(),
            reason: format!(
                "config {} changed since the checkpoint was written (digest {} != {}); refusing to resume",
                cp.config_path.display(),
                config.digest,
                cp.config_digest
            ),
        });
    }
    let plan = build_plan(&config)?;
    if plan.digest() != cp.plan_digest {
        return Err(RunError::Checkpoint {
            path: checkpoint_path.to_path_buf(),
            reason: "partition plan differs from the checkpointed one (labels changed?)".into(),
        });
    }
    if cp.finished {
        log::info!("run already finished; nothing to do");
        return Ok(RunOutcome {
            output_dir: config.output_dir.clone(),
            generations_done: cp.state.next_generation,
            finished: true,
        });
    }
    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    drive(&config, &plan, cp.state, options)
}

fn drive(
    config: &RunConfig,
    plan: &PartitionPlan,
    state: EngineState,
    options: &RunOptions,
) -> Result<RunOutcome, RunError> {
    let out = &config.output_dir;
    let plan_path = out.join(PLAN_FILE);
    write_atomic(
        &plan_path,
        &serde_json::to_vec_pretty(plan).map_err(|e| RunError::Internal(e.to_string()))?,
    )?;
    let checkpoint_path = out.join(CHECKPOINT_FILE);
    let plan_digest = plan.digest();
    let checkpoint = |state: &EngineState, finished: bool| {
        Checkpoint {
            format: CHECKPOINT_FORMAT,
            config_path: config.path.clone(),
            config_digest: config.digest.clone(),
            plan_digest: plan_digest.clone(),
            finished,
            state: state.clone(),
        }
        .store(&checkpoint_path)
    };

    let endpoint = build_endpoint(config)?;
    let transport = match config.transport {
        Transport::Ids => FoldTransport::SampleIds,
        Transport::PlanFile => FoldTransport::PlanFile(plan_path.display().to_string()),
    };
    let mut engine = Engine::resume(config.engine.clone(), &config.blocks, plan, endpoint.as_ref(), state)?
        .with_budget(config.budget)
        .with_transport(transport);

    checkpoint(engine.state(), engine.is_finished())?;
    while !engine.is_finished() {
        if let Some(limit) = options.stop_after {
            if engine.state().next_generation >= limit {
                log::info!("stopping after generation {limit} as requested");
                break;
            }
        }
        match engine.step() {
            Ok(report) => {
                log::info!(
                    "generation {} (fold {}): best phi {:.6}, mean phi {:.6}",
                    report.generation,
                    report.fold_index,
                    report.best_phi,
                    report.mean_phi
                );
                checkpoint(engine.state(), engine.is_finished())?;
                artifacts::write_generations(out, &engine.state().reports)?;
            }
            Err(e) => {
                // The last checkpoint is at the previous generation boundary.
                log::error!(
                    "generation {} failed: {e}; resume with the checkpoint at {}",
                    engine.state().next_generation,
                    checkpoint_path.display()
                );
                return Err(e.into());
            }
        }
    }
    let finished = engine.is_finished();
    artifacts::write_all(out, config, engine.state())?;
    Ok(RunOutcome {
        output_dir: out.clone(),
        generations_done: engine.state().next_generation,
        finished,
    })
}
