//! Generational search loop.
//!
//! Each generation evaluates the current population on the generation's
//! fold, keeps the best `elite_count` as parents, breeds offspring
//! (exploitation children, then crossover+mutation children, with the last
//! slot(s) replaced by fresh random genotypes), evaluates them on the same
//! fold, and truncates parents ∪ offspring back to `population_size` by phi.

pub mod operators;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::{evaluate_batch, EvalContext, FitnessError, FitnessRecord, FoldPayload, TrainingBudget};
use crate::genotype::{BlockSpec, Genotype};
use crate::partition::{fold_for_generation, PartitionPlan};
use crate::protocol::{FoldRef, Trainer};

pub use operators::{
    adaptation, crossover, exploitation, initialize_population, mutation, rank, select_elites, Operators,
    Scored, SelectionError, StandardOperators,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error(transparent)]
    Fitness(#[from] FitnessError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("partition has {plan} folds but engine expects {config}")]
    FoldMismatch { plan: usize, config: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub population_size: usize,
    pub elite_count: usize,
    pub max_generations: usize,
    pub seed_count: usize,
    pub perturbation_scale: f64,
    /// Per-gene probability of Gaussian mutation for crossover children.
    pub mutation_rate: f64,
    /// Offspring slots filled with fresh random genotypes each generation.
    pub adaptation_count: usize,
    pub rng_seed: u64,
    /// Set from the partition; not part of the serialized form.
    #[serde(skip)]
    pub fold_count: usize,
    /// Trial seeds are `trial_seed_offset + 0..seed_count`.
    pub trial_seed_offset: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            population_size: 10,
            elite_count: 3,
            max_generations: 10,
            seed_count: 3,
            perturbation_scale: 0.25,
            mutation_rate: 0.2,
            adaptation_count: 1,
            rng_seed: 0,
            fold_count: 3,
            trial_seed_offset: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let fail = |m: String| Err(EngineError::Config(m));
        if self.population_size < 2 {
            return fail(format!("population_size must be at least 2, got {}", self.population_size));
        }
        if self.elite_count == 0 || self.elite_count >= self.population_size {
            return fail(format!(
                "elite_count must be in 1..population_size ({}), got {}",
                self.population_size, self.elite_count
            ));
        }
        if self.max_generations == 0 {
            return fail("max_generations must be positive".into());
        }
        if self.seed_count == 0 {
            return fail("seed_count must be positive".into());
        }
        if !(self.perturbation_scale > 0.0 && self.perturbation_scale <= 1.0) {
            return fail(format!("perturbation_scale must be in (0, 1], got {}", self.perturbation_scale));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return fail(format!("mutation_rate must be in [0, 1], got {}", self.mutation_rate));
        }
        if self.adaptation_count > self.offspring_count() {
            return fail(format!(
                "adaptation_count {} exceeds offspring per generation {}",
                self.adaptation_count,
                self.offspring_count()
            ));
        }
        if self.fold_count == 0 {
            return fail("fold_count must be positive".into());
        }
        Ok(())
    }

    pub fn offspring_count(&self) -> usize {
        self.population_size.saturating_sub(self.elite_count)
    }

    /// `ceil(offspring / 2)` local-search children; the rest come from crossover.
    pub fn exploitation_count(&self) -> usize {
        self.offspring_count().div_ceil(2)
    }

    pub fn trial_seeds(&self) -> Vec<u64> {
        (0..self.seed_count as u64)
            .map(|i| self.trial_seed_offset.wrapping_add(i))
            .collect()
    }

    /// Local-search radius at `generation`, shrinking linearly.
    pub fn exploitation_radius(&self, generation: usize) -> f64 {
        self.perturbation_scale * (1.0 - generation as f64 / self.max_generations as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub genotype: Genotype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: usize,
    pub fold_index: usize,
    pub best_phi: f64,
    pub best_id: u64,
    pub best_genotype: Genotype,
    pub mean_phi: f64,
    /// Phi of the surviving population, in population order.
    pub population_phis: Vec<f64>,
    pub population_ids: Vec<u64>,
    pub elite_ids: Vec<u64>,
    /// Elites plus offspring considered for survival.
    pub pool_ids: Vec<u64>,
    /// Lowest phi seen in any evaluation so far.
    pub running_best_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    genes: Vec<u64>,
    fold_index: usize,
    record: FitnessRecord,
}

/// Everything needed to continue a run from a generation boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub next_generation: usize,
    pub next_id: u64,
    pub population: Vec<Individual>,
    pub rng: ChaCha8Rng,
    /// Every genotype ever evaluated, by id.
    pub genotypes: BTreeMap<u64, Genotype>,
    /// Every evaluation record in evaluation order.
    pub history: Vec<FitnessRecord>,
    pub reports: Vec<GenerationReport>,
    cache: Vec<CacheEntry>,
}

impl EngineState {
    /// Fresh state with a uniformly initialized population.
    pub fn initial(config: &EngineConfig, block_count: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let population: Vec<Individual> = initialize_population(config.population_size, block_count, &mut rng)
            .into_iter()
            .enumerate()
            .map(|(i, genotype)| Individual { id: i as u64, genotype })
            .collect();
        Self {
            next_generation: 0,
            next_id: population.len() as u64,
            population,
            rng,
            genotypes: BTreeMap::new(),
            history: Vec::new(),
            reports: Vec::new(),
            cache: Vec::new(),
        }
    }

    pub fn running_best_phi(&self) -> Option<f64> {
        self.history.iter().map(|r| r.phi).min_by(f64::total_cmp)
    }
}

/// Evaluated configurations across all generations, best first. Each
/// genotype appears once, with its best record.
pub fn ranked_configurations(state: &EngineState) -> Vec<(Genotype, FitnessRecord)> {
    let mut best: BTreeMap<u64, &FitnessRecord> = BTreeMap::new();
    for r in &state.history {
        best.entry(r.genotype_id)
            .and_modify(|cur| {
                if r.phi < cur.phi {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let mut out: Vec<(Genotype, FitnessRecord)> = best
        .into_values()
        .map(|r| (state.genotypes[&r.genotype_id].clone(), r.clone()))
        .collect();
    out.sort_by(|a, b| {
        a.1.phi
            .total_cmp(&b.1.phi)
            .then(a.1.genotype_id.cmp(&b.1.genotype_id))
    });
    out
}

/// How fold contents reach the trainer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum FoldTransport {
    #[default]
    SampleIds,
    /// Refer to folds of a plan file the trainer can read.
    PlanFile(String),
}

pub struct Engine<'a> {
    config: EngineConfig,
    spec: &'a BlockSpec,
    plan: &'a PartitionPlan,
    endpoint: &'a dyn Trainer,
    budget: TrainingBudget,
    transport: FoldTransport,
    operators: Box<dyn Operators + 'a>,
    state: EngineState,
}

impl<'a> Engine<'a> {
    pub fn new(
        config: EngineConfig,
        spec: &'a BlockSpec,
        plan: &'a PartitionPlan,
        endpoint: &'a dyn Trainer,
    ) -> Result<Self, EngineError> {
        let state = EngineState::initial(&config, spec.block_count());
        Self::resume(config, spec, plan, endpoint, state)
    }

    pub fn resume(
        config: EngineConfig,
        spec: &'a BlockSpec,
        plan: &'a PartitionPlan,
        endpoint: &'a dyn Trainer,
        state: EngineState,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        if plan.fold_count != config.fold_count {
            return Err(EngineError::FoldMismatch {
                plan: plan.fold_count,
                config: config.fold_count,
            });
        }
        if let Some(ind) = state.population.iter().find(|i| i.genotype.len() != spec.genotype_len()) {
            return Err(EngineError::Config(format!(
                "individual {} has {} genes, block spec needs {}",
                ind.id,
                ind.genotype.len(),
                spec.genotype_len()
            )));
        }
        Ok(Self {
            config,
            spec,
            plan,
            endpoint,
            budget: TrainingBudget::default(),
            transport: FoldTransport::default(),
            operators: Box::new(StandardOperators),
            state,
        })
    }

    pub fn with_budget(mut self, budget: TrainingBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_transport(mut self, transport: FoldTransport) -> Self {
        self.transport = transport;
        self
    }

    pub fn with_operators(mut self, operators: impl Operators + 'a) -> Self {
        self.operators = Box::new(operators);
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn into_state(self) -> EngineState {
        self.state
    }

    pub fn is_finished(&self) -> bool {
        self.state.next_generation >= self.config.max_generations
    }

    fn fold_payload(&self, fold_index: usize) -> FoldPayload {
        match &self.transport {
            FoldTransport::SampleIds => FoldPayload::Ids(self.plan.fold(fold_index).to_vec()),
            FoldTransport::PlanFile(path) => FoldPayload::Named(FoldRef {
                plan: path.clone(),
                fold: fold_index,
            }),
        }
    }

    /// Evaluates with the (genotype, fold) cache; new records are appended to
    /// `history` and the cache.
    fn evaluate(
        &self,
        individuals: &[Individual],
        generation: usize,
        fold_index: usize,
        cache: &mut Vec<CacheEntry>,
        history: &mut Vec<FitnessRecord>,
    ) -> Result<Vec<FitnessRecord>, EngineError> {
        let index: HashMap<(&[u64], usize), usize> = cache
            .iter()
            .enumerate()
            .map(|(i, e)| ((e.genes.as_slice(), e.fold_index), i))
            .collect();
        let keys: Vec<Vec<u64>> = individuals
            .iter()
            .map(|ind| ind.genotype.genes().iter().map(|g| g.to_bits()).collect())
            .collect();
        let mut out: Vec<Option<FitnessRecord>> = vec![None; individuals.len()];
        let mut misses: Vec<usize> = Vec::new();
        let mut seen_in_batch: HashMap<&[u64], usize> = HashMap::new();
        let mut dup_of: Vec<Option<usize>> = vec![None; individuals.len()];
        for (i, key) in keys.iter().enumerate() {
            if let Some(&ci) = index.get(&(key.as_slice(), fold_index)) {
                let mut r = cache[ci].record.clone();
                r.genotype_id = individuals[i].id;
                r.generation = generation;
                r.wall_time = 0.0;
                out[i] = Some(r);
            } else if let Some(&first) = seen_in_batch.get(key.as_slice()) {
                dup_of[i] = Some(first);
            } else {
                seen_in_batch.insert(key.as_slice(), i);
                misses.push(i);
            }
        }
        drop(index);

        let fold = self.fold_payload(fold_index);
        let seeds = self.config.trial_seeds();
        let ctx = EvalContext {
            spec: self.spec,
            endpoint: self.endpoint,
            generation,
            fold_index,
            fold: &fold,
            seeds: &seeds,
            budget: self.budget,
        };
        let batch: Vec<(u64, &Genotype)> = misses
            .iter()
            .map(|&i| (individuals[i].id, &individuals[i].genotype))
            .collect();
        let fresh = evaluate_batch(&batch, &ctx)?;
        for (&i, rec) in misses.iter().zip(fresh) {
            cache.push(CacheEntry {
                genes: keys[i].clone(),
                fold_index,
                record: rec.clone(),
            });
            out[i] = Some(rec);
        }
        for i in 0..individuals.len() {
            if let Some(first) = dup_of[i] {
                let mut r = out[first].clone().expect("first copy evaluated");
                r.genotype_id = individuals[i].id;
                r.wall_time = 0.0;
                out[i] = Some(r);
            }
        }
        let out: Vec<FitnessRecord> = out.into_iter().map(|r| r.expect("all evaluated")).collect();
        history.extend(out.iter().cloned());
        Ok(out)
    }

    /// Runs one generation. State is only updated if the whole generation
    /// succeeds.
    pub fn step(&mut self) -> Result<GenerationReport, EngineError> {
        let cfg = self.config.clone();
        let g = self.state.next_generation;
        let fold_index = fold_for_generation(g, cfg.fold_count);
        let mut rng = self.state.rng.clone();
        let mut cache = self.state.cache.clone();
        let mut history = Vec::new();
        let mut next_id = self.state.next_id;

        let parents = self.state.population.clone();
        let parent_records = self.evaluate(&parents, g, fold_index, &mut cache, &mut history)?;
        let scored: Vec<Scored<'_>> = parents
            .iter()
            .zip(&parent_records)
            .map(|(ind, rec)| Scored {
                id: ind.id,
                genotype: &ind.genotype,
                phi: rec.phi,
            })
            .collect();
        let elites = select_elites(&scored, cfg.elite_count)?;

        let radius = cfg.exploitation_radius(g);
        let mut children: Vec<Genotype> = Vec::with_capacity(cfg.offspring_count());
        for i in 0..cfg.exploitation_count() {
            let elite = elites[i % elites.len()].genotype;
            children.push(self.operators.exploit(elite, radius, &mut rng));
        }
        while children.len() < cfg.offspring_count() {
            let a = rng.gen_range(0..elites.len());
            let mut b = rng.gen_range(0..elites.len());
            if elites.len() > 1 {
                while b == a {
                    b = rng.gen_range(0..elites.len());
                }
            }
            let child = self.operators.crossover(elites[a].genotype, elites[b].genotype, &mut rng);
            children.push(
                self.operators
                    .mutate(&child, cfg.mutation_rate, cfg.perturbation_scale, &mut rng),
            );
        }
        // Adaptation: the worst parents' slots are resampled and the fresh
        // genotypes take the last offspring slots.
        let (adapted, replaced) = self.operators.adapt(&scored, cfg.adaptation_count, &mut rng);
        let n = children.len();
        for (k, &i) in replaced.iter().enumerate() {
            children[n - 1 - k] = adapted[i].clone();
        }

        let offspring: Vec<Individual> = children
            .into_iter()
            .map(|genotype| {
                let id = next_id;
                next_id += 1;
                Individual { id, genotype }
            })
            .collect();
        let offspring_records = self.evaluate(&offspring, g, fold_index, &mut cache, &mut history)?;

        let elite_ids: Vec<u64> = elites.iter().map(|s| s.id).collect();
        let mut pool_ids = elite_ids.clone();
        pool_ids.extend(offspring.iter().map(|o| o.id));

        for ind in parents.iter().chain(&offspring) {
            self.state
                .genotypes
                .entry(ind.id)
                .or_insert_with(|| ind.genotype.clone());
        }
        let mut union: Vec<(Individual, f64)> = parents
            .into_iter()
            .zip(parent_records.iter().map(|r| r.phi))
            .chain(offspring.into_iter().zip(offspring_records.iter().map(|r| r.phi)))
            .collect();
        union.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.id.cmp(&b.0.id)));
        union.truncate(cfg.population_size);

        self.state.history.extend(history);
        self.state.cache = cache;
        self.state.rng = rng;
        self.state.next_id = next_id;
        self.state.next_generation = g + 1;

        let population_phis: Vec<f64> = union.iter().map(|(_, p)| *p).collect();
        let population_ids: Vec<u64> = union.iter().map(|(i, _)| i.id).collect();
        let (best, best_phi) = &union[0];
        let report = GenerationReport {
            generation: g,
            fold_index,
            best_phi: *best_phi,
            best_id: best.id,
            best_genotype: best.genotype.clone(),
            mean_phi: population_phis.iter().sum::<f64>() / population_phis.len() as f64,
            population_phis,
            population_ids,
            elite_ids,
            pool_ids,
            running_best_phi: self.state.running_best_phi().unwrap_or(f64::INFINITY),
        };
        self.state.population = union.into_iter().map(|(i, _)| i).collect();
        self.state.reports.push(report.clone());
        Ok(report)
    }

    /// Runs the remaining generations.
    pub fn run(&mut self) -> Result<Vec<(Genotype, FitnessRecord)>, EngineError> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(ranked_configurations(&self.state))
    }
}

/// Runs a full search with default budget and operators.
pub fn run(
    config: EngineConfig,
    spec: &BlockSpec,
    plan: &PartitionPlan,
    endpoint: &dyn Trainer,
) -> Result<Vec<(Genotype, FitnessRecord)>, EngineError> {
    Engine::new(config, spec, plan, endpoint)?.run()
}
