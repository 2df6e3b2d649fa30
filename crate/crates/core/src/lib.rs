//! Evolutionary search over selective fine-tuning configurations.
//!
//! A model is split into blocks. Each candidate configuration (a
//! [`genotype::Genotype`]) decides, per block, whether the block is frozen
//! and how much its base learning rate is scaled. Candidates are scored by
//! an external trainer (or an in-process surrogate) and evolved with
//! elitist selection, local search, crossover, mutation and random
//! restarts. Each generation trains on one stratified fold of the data.

pub mod engine;
pub mod fitness;
pub mod genotype;
pub mod orchestrator;
pub mod partition;
pub mod protocol;
