//! Fitness evaluation: one training trial per seed, aggregated into
//! `phi = 1 - mean(validation accuracy)`.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genotype::{decode, BlockSpec, Genotype, GenotypeError};
use crate::protocol::{
    EvalJob, EvaluateRequest, FoldRef, Trainer, TrainerError, LOSS_CROSS_ENTROPY, PROTO_VERSION,
};

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error("genotype {genotype_id}: {source}")]
    Decode {
        genotype_id: u64,
        #[source]
        source: GenotypeError,
    },
    #[error("genotype {genotype_id}: trainer failed: {source}")]
    Endpoint {
        genotype_id: u64,
        #[source]
        source: TrainerError,
    },
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("invalid training budget: {0}")]
    Budget(String),
}

/// Epoch limits forwarded to the trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingBudget {
    pub max_epochs: u32,
    pub patience: u32,
}

impl Default for TrainingBudget {
    fn default() -> Self {
        Self {
            max_epochs: 30,
            patience: 3,
        }
    }
}

impl TrainingBudget {
    pub fn new(max_epochs: u32, patience: u32) -> Result<Self, FitnessError> {
        let b = Self { max_epochs, patience };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), FitnessError> {
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(FitnessError::Budget("max_epochs and patience must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(FitnessError::Budget(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    pub fn loss(&self) -> &'static str {
        LOSS_CROSS_ENTROPY
    }
}

/// How a generation's training fold reaches the trainer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FoldPayload {
    Ids(Vec<String>),
    Named(FoldRef),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub genotype_id: u64,
    /// `1 - mean(seed_accuracies)`; minimized.
    pub phi: f64,
    pub seed_accuracies: Vec<f64>,
    pub generation: usize,
    pub fold_index: usize,
    /// Seconds.
    pub wall_time: f64,
    pub epochs_run: Vec<u32>,
    /// Seeds whose trial failed after all retries and were scored 0.
    #[serde(default)]
    pub failed_seeds: Vec<usize>,
}

impl FitnessRecord {
    pub fn mean_accuracy(&self) -> f64 {
        1.0 - self.phi
    }
}

pub fn phi_from_accuracies(accuracies: &[f64]) -> f64 {
    1.0 - accuracies.iter().sum::<f64>() / accuracies.len() as f64
}

/// Shared inputs for evaluating individuals in one generation.
pub struct EvalContext<'a> {
    pub spec: &'a BlockSpec,
    pub endpoint: &'a dyn Trainer,
    pub generation: usize,
    pub fold_index: usize,
    pub fold: &'a FoldPayload,
    pub seeds: &'a [u64],
    pub budget: TrainingBudget,
}

/// Evaluates a single individual.
pub fn evaluate(genotype_id: u64, genotype: &Genotype, ctx: &EvalContext<'_>) -> Result<FitnessRecord, FitnessError> {
    let mut out = evaluate_batch(&[(genotype_id, genotype)], ctx)?;
    Ok(out.pop().expect("one record per individual"))
}

struct Trial {
    accuracy: f64,
    epochs: u32,
    failed: bool,
}

/// Evaluates several individuals, running up to the endpoint's capacity of
/// seed trials concurrently. Records come back in input order.
///
/// Non-fatal trial failures are retried `retry_budget` times and then
/// scored 0; a fatal transport failure aborts the whole batch.
pub fn evaluate_batch(
    individuals: &[(u64, &Genotype)],
    ctx: &EvalContext<'_>,
) -> Result<Vec<FitnessRecord>, FitnessError> {
    if ctx.seeds.is_empty() {
        return Err(FitnessError::NoSeeds);
    }
    ctx.budget.validate()?;

    let mut requests = Vec::with_capacity(individuals.len() * ctx.seeds.len());
    for &(id, genotype) in individuals {
        let cfg = decode(genotype, ctx.spec).map_err(|source| FitnessError::Decode {
            genotype_id: id,
            source,
        })?;
        for (si, &seed) in ctx.seeds.iter().enumerate() {
            let (train_sample_ids, fold_ref) = match ctx.fold {
                FoldPayload::Ids(ids) => (Some(ids.clone()), None),
                FoldPayload::Named(r) => (None, Some(r.clone())),
            };
            requests.push(EvaluateRequest {
                proto: PROTO_VERSION,
                request_id: format!("{id}-g{}-f{}-s{si}", ctx.generation, ctx.fold_index),
                genotype_id: id.to_string(),
                block_rates: cfg.rates.clone(),
                frozen_mask: cfg.mask.clone(),
                fold_index: ctx.fold_index,
                train_sample_ids,
                fold_ref,
                seed,
                max_epochs: ctx.budget.max_epochs,
                patience: ctx.budget.patience,
                loss: ctx.budget.loss().to_string(),
            });
        }
    }

    let start = Instant::now();
    let n_jobs = requests.len();
    let slots: Vec<Mutex<Option<(Trial, f64)>>> = (0..n_jobs).map(|_| Mutex::new(None)).collect();
    let fatal: Mutex<Option<(u64, TrainerError)>> = Mutex::new(None);
    let abort = AtomicBool::new(false);
    let next = AtomicUsize::new(0);
    let n_seeds = ctx.seeds.len();

    let worker = || loop {
        if abort.load(Ordering::SeqCst) {
            return;
        }
        let j = next.fetch_add(1, Ordering::SeqCst);
        if j >= n_jobs {
            return;
        }
        let (id, genotype) = individuals[j / n_seeds];
        match run_trial(&requests[j], genotype, ctx) {
            Ok(trial) => {
                *slots[j].lock().unwrap() = Some((trial, start.elapsed().as_secs_f64()));
            }
            Err(e) => {
                abort.store(true, Ordering::SeqCst);
                fatal.lock().unwrap().get_or_insert((id, e));
                return;
            }
        }
    };

    let workers = ctx.endpoint.settings().capacity.clamp(1, n_jobs.max(1));
    if workers == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(worker);
            }
        });
    }

    if let Some((genotype_id, source)) = fatal.into_inner().unwrap() {
        return Err(FitnessError::Endpoint { genotype_id, source });
    }

    let mut trials = slots.into_iter().map(|s| s.into_inner().unwrap().expect("every trial ran"));
    let mut records = Vec::with_capacity(individuals.len());
    for &(genotype_id, _) in individuals {
        let mut seed_accuracies = Vec::with_capacity(n_seeds);
        let mut epochs_run = Vec::with_capacity(n_seeds);
        let mut failed_seeds = Vec::new();
        let mut wall_time = 0.0f64;
        for si in 0..n_seeds {
            let (trial, done_at) = trials.next().unwrap();
            seed_accuracies.push(trial.accuracy);
            epochs_run.push(trial.epochs);
            if trial.failed {
                failed_seeds.push(si);
            }
            wall_time = wall_time.max(done_at);
        }
        records.push(FitnessRecord {
            genotype_id,
            phi: phi_from_accuracies(&seed_accuracies),
            seed_accuracies,
            generation: ctx.generation,
            fold_index: ctx.fold_index,
            wall_time,
            epochs_run,
            failed_seeds,
        });
    }
    Ok(records)
}

fn run_trial(base: &EvaluateRequest, genotype: &Genotype, ctx: &EvalContext<'_>) -> Result<Trial, TrainerError> {
    let retries = ctx.endpoint.settings().retry_budget;
    let mut last_err = None;
    for attempt in 0..=retries {
        let mut req = base.clone();
        if attempt > 0 {
            req.request_id = format!("{}-r{attempt}", base.request_id);
        }
        let job = EvalJob {
            request: &req,
            genes: genotype.genes(),
            base_rates: ctx.spec.base_rates(),
        };
        let outcome = ctx.endpoint.evaluate(&job).and_then(|resp| {
            resp.validate()?;
            let acc = resp.validation_accuracy.expect("validated ok response");
            Ok(Trial {
                accuracy: acc,
                epochs: resp.epochs_run.min(req.max_epochs),
                failed: false,
            })
        });
        match outcome {
            Ok(t) => return Ok(t),
            Err(e) if e.is_fatal() => return Err(e),
            Err(e) => {
                log::warn!("request {} failed (attempt {}): {e}", req.request_id, attempt + 1);
                last_err = Some(e);
            }
        }
    }
    log::warn!(
        "genotype {} seed {} scored 0 after {} attempts: {}",
        base.genotype_id,
        base.seed,
        retries + 1,
        last_err.map(|e| e.to_string()).unwrap_or_default()
    );
    Ok(Trial {
        accuracy: 0.0,
        epochs: 0,
        failed: true,
    })
}
