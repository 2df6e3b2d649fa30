//! Run configuration file (TOML).
//!
//! Only `[blocks]` and `[trainer]` are required; everything else has
//! defaults (population 10, 3 elites, 10 generations, 3 seeds, 0.25
//! perturbation, 30 epochs, patience 3, 3 folds, top 5).

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::RunError;
use crate::engine::EngineConfig;
use crate::fitness::TrainingBudget;
use crate::genotype::BlockSpec;
use crate::partition::{self, hex, Labels};
use crate::protocol::EndpointSettings;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default = "default_top_k")]
    top_k: usize,
    #[serde(default)]
    engine: EngineConfig,
    #[serde(default)]
    budget: RawBudget,
    blocks: RawBlocks,
    #[serde(default)]
    partition: RawPartition,
    trainer: TrainerConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}

fn default_top_k() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBudget {
    #[serde(default = "default_epochs")]
    max_epochs: u32,
    #[serde(default = "default_patience")]
    patience: u32,
}

impl Default for RawBudget {
    fn default() -> Self {
        Self {
            max_epochs: default_epochs(),
            patience: default_patience(),
        }
    }
}

fn default_epochs() -> u32 {
    30
}

fn default_patience() -> u32 {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlocks {
    #[serde(default)]
    names: Option<Vec<String>>,
    #[serde(default)]
    count: Option<usize>,
    #[serde(default)]
    base_rate: Option<f64>,
    #[serde(default)]
    base_rates: Option<Vec<f64>>,
    #[serde(default)]
    param_counts: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPartition {
    #[serde(default = "default_folds")]
    fold_count: usize,
    #[serde(default)]
    labels_file: Option<PathBuf>,
    #[serde(default)]
    labels: Option<Labels>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    transport: Transport,
}

impl Default for RawPartition {
    fn default() -> Self {
        Self {
            fold_count: default_folds(),
            labels_file: None,
            labels: None,
            seed: None,
            transport: Transport::default(),
        }
    }
}

fn default_folds() -> usize {
    3
}

/// How fold membership is sent to the trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    /// Sample ids inline in every request.
    #[default]
    Ids,
    /// `fold_ref` pointing at `partition.json` in the output directory.
    PlanFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateName {
    MaskMatch,
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainerKind {
    Process,
    Surrogate,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub kind: TrainerKind,
    /// Program and arguments, run from the config file's directory.
    #[serde(default)]
    pub command: Vec<String>,
    #[serde(default)]
    pub surrogate: Option<SurrogateName>,
    #[serde(default = "one")]
    pub capacity: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "one_u32")]
    pub retry_budget: u32,
    #[serde(default)]
    pub instance_seed: u64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub target_mask: Option<Vec<u8>>,
    #[serde(default)]
    pub target_exponents: Option<Vec<f64>>,
    #[serde(default)]
    pub optimum: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

fn one_u32() -> u32 {
    1
}

fn default_timeout() -> f64 {
    3600.0
}

impl TrainerConfig {
    pub fn settings(&self) -> EndpointSettings {
        EndpointSettings {
            capacity: self.capacity,
            timeout: Duration::from_secs_f64(self.timeout_secs),
            retry_budget: self.retry_budget,
        }
    }
}

/// A validated run configuration with paths resolved against the config
/// file's directory.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub path: PathBuf,
    pub base_dir: PathBuf,
    /// SHA-256 of the config file bytes.
    pub digest: String,
    pub output_dir: PathBuf,
    pub top_k: usize,
    pub engine: EngineConfig,
    pub budget: TrainingBudget,
    pub blocks: BlockSpec,
    pub param_counts: Option<Vec<u64>>,
    pub labels: Labels,
    pub partition_seed: u64,
    pub transport: Transport,
    pub trainer: TrainerConfig,
}

fn cfg_err(field: &str, msg: impl std::fmt::Display) -> RunError {
    RunError::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let bytes = std::fs::read(path).map_err(|e| cfg_err(&path.display().to_string(), e))?;
        let path = std::fs::canonicalize(path).map_err(|e| cfg_err(&path.display().to_string(), e))?;
        let text = String::from_utf8(bytes.clone()).map_err(|e| cfg_err("config", e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, path, base_dir, hex(&Sha256::digest(&bytes)))
    }

    pub fn parse(text: &str, path: PathBuf, base_dir: PathBuf, digest: String) -> Result<Self, RunError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;

        let mut engine = raw.engine;
        engine.fold_count = raw.partition.fold_count;
        engine
            .validate()
            .map_err(|e| cfg_err("engine", e))?;
        if raw.partition.fold_count == 0 {
            return Err(cfg_err("partition.fold_count", "must be at least 1"));
        }
        let budget = TrainingBudget::new(raw.budget.max_epochs, raw.budget.patience)
            .map_err(|e| cfg_err("budget", e))?;
        if raw.top_k == 0 {
            return Err(cfg_err("top_k", "must be at least 1"));
        }

        let b = raw.blocks;
        let count = match (&b.names, b.count, &b.base_rates) {
            (Some(n), _, _) => n.len(),
            (None, Some(c), _) => c,
            (None, None, Some(r)) => r.len(),
            (None, None, None) => {
                return Err(cfg_err("blocks", "one of names, count or base_rates is required"))
            }
        };
        if let Some(c) = b.count {
            if c != count {
                return Err(cfg_err("blocks.count", format!("{c} disagrees with {count} names")));
            }
        }
        let names = b
            .names
            .unwrap_or_else(|| (0..count).map(|i| format!("block{i}")).collect());
        let base_rates = match (b.base_rates, b.base_rate) {
            (Some(_), Some(_)) => return Err(cfg_err("blocks", "give base_rate or base_rates, not both")),
            (Some(r), None) => r,
            (None, Some(r)) => vec![r; count],
            (None, None) => return Err(cfg_err("blocks", "base_rate or base_rates is required")),
        };
        if base_rates.len() != count {
            return Err(cfg_err(
                "blocks.base_rates",
                format!("has {} entries, expected {count}", base_rates.len()),
            ));
        }
        let blocks = BlockSpec::new(names, base_rates).map_err(|e| cfg_err("blocks", e))?;
        if let Some(pc) = &b.param_counts {
            if pc.len() != count {
                return Err(cfg_err(
                    "blocks.param_counts",
                    format!("has {} entries, expected {count}", pc.len()),
                ));
            }
            if pc.iter().all(|&c| c == 0) {
                return Err(cfg_err("blocks.param_counts", "all zero"));
            }
        }

        let labels = match (raw.partition.labels_file, raw.partition.labels) {
            (Some(_), Some(_)) => return Err(cfg_err("partition", "give labels_file or labels, not both")),
            (Some(file), None) => partition::read_labels_file(&base_dir.join(file))
                .map_err(|e| cfg_err("partition.labels_file", e))?,
            (None, Some(l)) => l,
            (None, None) => return Err(cfg_err("partition", "labels_file or labels is required")),
        };
        if labels.is_empty() {
            return Err(cfg_err("partition", "no samples"));
        }

        let trainer = raw.trainer;
        if trainer.capacity == 0 {
            return Err(cfg_err("trainer.capacity", "must be at least 1"));
        }
        if !(trainer.timeout_secs.is_finite() && trainer.timeout_secs > 0.0) {
            return Err(cfg_err("trainer.timeout_secs", "must be positive"));
        }
        match trainer.kind {
            TrainerKind::Process if trainer.command.is_empty() => {
                return Err(cfg_err("trainer.command", "required for kind = \"process\""))
            }
            TrainerKind::Surrogate if trainer.surrogate.is_none() => {
                return Err(cfg_err("trainer.surrogate", "required for kind = \"surrogate\""))
            }
            _ => {}
        }
        if !(trainer.noise.is_finite() && trainer.noise >= 0.0) {
            return Err(cfg_err("trainer.noise", "must be non-negative"));
        }
        if let Some(m) = &trainer.target_mask {
            if m.len() != count || m.iter().any(|&x| x > 1) {
                return Err(cfg_err("trainer.target_mask", format!("must be {count} values of 0 or 1")));
            }
        }
        if let Some(e) = &trainer.target_exponents {
            if e.len() != count || e.iter().any(|x| !(-1.0..=1.0).contains(x)) {
                return Err(cfg_err(
                    "trainer.target_exponents",
                    format!("must be {count} values in [-1, 1]"),
                ));
            }
        }
        if let Some(o) = &trainer.optimum {
            if o.len() != count + 1 || o.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(cfg_err("trainer.optimum", format!("must be {} values in [0, 1]", count + 1)));
            }
        }

        Ok(Self {
            path,
            output_dir: base_dir.join(raw.output_dir),
            base_dir,
            digest,
            top_k: raw.top_k,
            partition_seed: raw.partition.seed.unwrap_or(engine.rng_seed),
            engine,
            budget,
            blocks,
            param_counts: b.param_counts,
            labels,
            transport: raw.partition.transport,
            trainer,
        })
    }

    /// Per-block parameter counts, one per block when not configured.
    pub fn param_counts_or_unit(&self) -> Vec<u64> {
        self.param_counts
            .clone()
            .unwrap_or_else(|| vec![1; self.blocks.block_count()])
    }
}
