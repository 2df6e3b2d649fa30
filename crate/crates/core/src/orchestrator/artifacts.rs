//! CSV artifacts written into the run directory.
//!
//! * `generations.csv` – one row per generation: best/mean phi.
//! * `topk.csv` – the `top_k` best distinct configurations with genes,
//!   masks, weights and rates (wide, one column per block).
//! * `heatmap.csv` – per-block `eta` of each top-k configuration (long).
//! * `params.csv` – trainable-parameter fraction of each top-k configuration.
//!
//! Floats use Rust's shortest round-trip formatting, so re-parsing a value
//! gives back the identical `f64`.

use std::path::Path;

use super::{io_err, write_atomic, RunConfig, RunError};
use crate::engine::{ranked_configurations, EngineState, GenerationReport};
use crate::genotype::{decode, trainable_fraction, Genotype};

pub const GENERATIONS_CSV: &str = "generations.csv";
pub const TOPK_CSV: &str = "topk.csv";
pub const HEATMAP_CSV: &str = "heatmap.csv";
pub const PARAMS_CSV: &str = "params.csv";

fn to_bytes(rows: Vec<Vec<String>>) -> Result<Vec<u8>, RunError> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).map_err(|e| RunError::Internal(e.to_string()))?;
    }
    w.into_inner().map_err(|e| RunError::Internal(e.to_string()))
}

fn write_csv(dir: &Path, name: &str, rows: Vec<Vec<String>>) -> Result<(), RunError> {
    write_atomic(&dir.join(name), &to_bytes(rows)?)
}

pub fn write_generations(dir: &Path, reports: &[GenerationReport]) -> Result<(), RunError> {
    let mut rows = vec![[
        "generation",
        "fold_index",
        "best_phi",
        "best_accuracy",
        "mean_phi",
        "running_best_phi",
        "best_genotype_id",
    ]
    .map(String::from)
    .to_vec()];
    for r in reports {
        rows.push(vec![
            r.generation.to_string(),
            r.fold_index.to_string(),
            r.best_phi.to_string(),
            (1.0 - r.best_phi).to_string(),
            r.mean_phi.to_string(),
            r.running_best_phi.to_string(),
            r.best_id.to_string(),
        ]);
    }
    write_csv(dir, GENERATIONS_CSV, rows)
}

/// Header of `topk.csv` for `blocks` blocks.
pub fn topk_header(blocks: usize) -> Vec<String> {
    let mut h: Vec<String> = ["rank", "genotype_id", "generation", "fold_index", "phi", "accuracy"]
        .map(String::from)
        .to_vec();
    h.extend((0..blocks).map(|b| format!("gene_{b}")));
    h.push("threshold".into());
    h.extend((0..blocks).map(|b| format!("mask_{b}")));
    h.extend((0..blocks).map(|b| format!("weight_{b}")));
    h.extend((0..blocks).map(|b| format!("rate_{b}")));
    h
}

pub fn write_all(dir: &Path, config: &RunConfig, state: &EngineState) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_generations(dir, &state.reports)?;

    let spec = &config.blocks;
    let blocks = spec.block_count();
    let counts = config.param_counts_or_unit();
    let total: u64 = counts.iter().sum();
    let top: Vec<(Genotype, _)> = ranked_configurations(state)
        .into_iter()
        .take(config.top_k)
        .collect();

    let mut topk = vec![topk_header(blocks)];
    let mut heat = vec![["rank", "genotype_id", "block_index", "block_name", "frozen", "eta", "params"]
        .map(String::from)
        .to_vec()];
    let mut params = vec![[
        "rank",
        "genotype_id",
        "trainable_params",
        "total_params",
        "trainable_fraction",
    ]
    .map(String::from)
    .to_vec()];

    for (i, (genotype, rec)) in top.iter().enumerate() {
        let rank = (i + 1).to_string();
        let cfg = decode(genotype, spec).map_err(|e| RunError::Internal(e.to_string()))?;
        let mut row = vec![
            rank.clone(),
            rec.genotype_id.to_string(),
            rec.generation.to_string(),
            rec.fold_index.to_string(),
            rec.phi.to_string(),
            rec.mean_accuracy().to_string(),
        ];
        row.extend(genotype.genes().iter().map(f64::to_string));
        row.extend(cfg.mask.iter().map(u8::to_string));
        row.extend(cfg.weights.iter().map(f64::to_string));
        row.extend(cfg.rates.iter().map(f64::to_string));
        topk.push(row);

        for (b, (name, params)) in spec.names().iter().zip(&counts).enumerate() {
            heat.push(vec![
                rank.clone(),
                rec.genotype_id.to_string(),
                b.to_string(),
                name.clone(),
                u8::from(cfg.mask[b] == 0).to_string(),
                cfg.eta[b].to_string(),
                params.to_string(),
            ]);
        }

        let fraction = trainable_fraction(&cfg, &counts).map_err(|e| RunError::Internal(e.to_string()))?;
        let trainable: u64 = cfg
            .mask
            .iter()
            .zip(&counts)
            .filter(|(&m, _)| m == 1)
            .map(|(_, &c)| c)
            .sum();
        params.push(vec![
            rank,
            rec.genotype_id.to_string(),
            trainable.to_string(),
            total.to_string(),
            fraction.to_string(),
        ]);
    }

    write_csv(dir, TOPK_CSV, topk)?;
    write_csv(dir, HEATMAP_CSV, heat)?;
    write_csv(dir, PARAMS_CSV, params)
}
