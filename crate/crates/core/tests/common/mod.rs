//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seltune::engine::{Engine, EngineConfig};
use seltune::fitness::{evaluate, EvalContext, FoldPayload, TrainingBudget};
use seltune::genotype::{decode, BlockSpec, Genotype};
use seltune::partition::{build_partition, fold_for_generation, Labels, PartitionPlan};
use seltune::protocol::{MaskMatchSurrogate, Trainer};

/// `n` samples spread round-robin over `classes` classes.
pub fn labels(n: usize, classes: usize) -> Labels {
    (0..n).map(|i| (format!("s{i:05}"), format!("c{}", i % classes))).collect()
}

pub fn plan(fold_count: usize, seed: u64) -> PartitionPlan {
    build_partition(&labels(60, 3), fold_count, seed).unwrap()
}

/// Result of one search on a mask-match instance: the noise-free accuracy
/// of the configuration the method would report, and evaluations spent.
pub struct Outcome {
    pub clean_accuracy: f64,
    pub evaluations: usize,
}

pub fn clean_accuracy_of(s: &MaskMatchSurrogate, genes: &[f64], spec: &BlockSpec) -> f64 {
    let cfg = decode(&Genotype::new(genes.to_vec()).unwrap(), spec).unwrap();
    s.clean_accuracy(&cfg.mask, &cfg.rates, spec.base_rates())
}

pub fn evolve(s: &MaskMatchSurrogate, spec: &BlockSpec, plan: &PartitionPlan, rng_seed: u64) -> Outcome {
    let config = EngineConfig {
        rng_seed,
        ..EngineConfig::default()
    };
    let mut engine = Engine::new(config, spec, plan, s).unwrap();
    let ranked = engine.run().unwrap();
    Outcome {
        clean_accuracy: clean_accuracy_of(s, ranked[0].0.genes(), spec),
        evaluations: engine.state().history.len(),
    }
}

/// Uniform random search spending `evaluations` genotype evaluations with
/// the same trial seeds and the same fold rotation as the engine
/// (`per_generation` evaluations per fold). Returns the best observed phi
/// and its genes.
pub fn random_search(
    s: &dyn Trainer,
    spec: &BlockSpec,
    plan: &PartitionPlan,
    evaluations: usize,
    per_generation: usize,
    rng_seed: u64,
) -> (f64, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x5eed);
    let seeds = EngineConfig::default().trial_seeds();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..evaluations {
        let generation = i / per_generation;
        let fold_index = fold_for_generation(generation, plan.fold_count);
        let fold = FoldPayload::Ids(plan.fold(fold_index).to_vec());
        let genes: Vec<f64> = (0..spec.genotype_len()).map(|_| rng.gen::<f64>()).collect();
        let g = Genotype::new(genes.clone()).unwrap();
        let ctx = EvalContext {
            spec,
            endpoint: s,
            generation,
            fold_index,
            fold: &fold,
            seeds: &seeds,
            budget: TrainingBudget::default(),
        };
        let rec = evaluate(i as u64, &g, &ctx).unwrap();
        if best.as_ref().is_none_or(|(p, _)| rec.phi < *p) {
            best = Some((rec.phi, genes));
        }
    }
    best.unwrap()
}

pub fn seltune_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_seltune"))
}

/// Writes a small deterministic mask-match run config into `dir`.
pub fn write_surrogate_config(dir: &Path, extra_engine: &str, top_k: usize) -> PathBuf {
    let labels: BTreeMap<String, String> = labels(30, 3);
    let mut text = format!("output_dir = \"run\"\ntop_k = {top_k}\n\n[engine]\nrng_seed = 11\n{extra_engine}\n");
    text.push_str(
        "[blocks]\nnames = [\"stem\", \"stage1\", \"stage2\", \"stage3\", \"stage4\", \"head\"]\n\
         base_rates = [0.001, 0.001, 0.001, 0.001, 0.01, 0.01]\n\
         param_counts = [9408, 215808, 1219584, 7098368, 14964736, 20490]\n\n",
    );
    text.push_str("[partition]\nfold_count = 3\nlabels_file = \"labels.csv\"\n\n");
    text.push_str("[trainer]\nkind = \"surrogate\"\nsurrogate = \"mask-match\"\ninstance_seed = 5\nnoise = 0.01\n");
    let csv: String = labels.iter().map(|(k, v)| format!("{k},{v}\n")).collect();
    std::fs::write(dir.join("labels.csv"), csv).unwrap();
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}
