//! Human-readable summary of a run directory, with cross-file checks.
//!
//! The summary re-reads the CSV artifacts and verifies that
//! * every `topk.csv` row re-decodes bit-identically from its genes,
//! * `params.csv` fractions equal the fraction recomputed from the masks,
//! * every `heatmap.csv` eta lies in `{0} ∪ [0.1, 10]`,
//! * `topk.csv` is sorted ascending by phi.

use std::fmt;
use std::path::{Path, PathBuf};

use super::artifacts::{topk_header, HEATMAP_CSV, PARAMS_CSV, TOPK_CSV};
use super::{io_err, Checkpoint, RunConfig, RunError, CHECKPOINT_FILE};
use crate::genotype::{decode, trainable_fraction, FineTuneConfig, Genotype};

/// One ranked configuration as read back from `topk.csv`.
#[derive(Debug, Clone)]
pub struct RankedRow {
    pub rank: usize,
    pub genotype_id: u64,
    pub generation: usize,
    pub fold_index: usize,
    pub phi: f64,
    pub accuracy: f64,
    pub genes: Vec<f64>,
    pub config: FineTuneConfig,
}

#[derive(Debug, Clone)]
pub struct BlockRow {
    pub name: String,
    pub frozen: bool,
    pub weight: f64,
    pub eta: f64,
    pub rate: f64,
    pub params: u64,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub run_dir: PathBuf,
    pub generations_done: usize,
    pub finished: bool,
    pub ranked: Vec<RankedRow>,
    /// Per-block table of the best configuration.
    pub best_blocks: Vec<BlockRow>,
    pub best_trainable_fraction: f64,
    /// Per generation: (generation, fold, best phi, mean phi).
    pub generations: Vec<(usize, usize, f64, f64)>,
    /// Cross-file consistency problems; empty for a healthy run directory.
    pub problems: Vec<String>,
}

impl Summary {
    pub fn best(&self) -> Option<&RankedRow> {
        self.ranked.first()
    }

    pub fn is_consistent(&self) -> bool {
        self.problems.is_empty()
    }
}

fn read_rows(dir: &Path, name: &str) -> Result<(Vec<String>, Vec<Vec<String>>), RunError> {
    let path = dir.join(name);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let bad = |e: csv::Error| RunError::Config(format!("{}: {e}", path.display()));
    let header = r.headers().map_err(bad)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(bad)?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}

fn field<T: std::str::FromStr>(file: &str, line: usize, col: &str, raw: &str) -> Result<T, RunError> {
    raw.parse()
        .map_err(|_| RunError::Config(format!("{file} row {line}: bad {col} value {raw:?}")))
}

/// Builds the summary of `run_dir` (the directory holding the checkpoint
/// and the CSV artifacts). The run's config file must still be readable.
pub fn report_command(run_dir: &Path) -> Result<Summary, RunError> {
    let cp = Checkpoint::load(&run_dir.join(CHECKPOINT_FILE))?;
    let config = RunConfig::load(&cp.config_path)?;
    let spec = &config.blocks;
    let blocks = spec.block_count();
    let counts = config.param_counts_or_unit();
    let mut problems = Vec::new();

    let (header, rows) = read_rows(run_dir, TOPK_CSV)?;
    if header != topk_header(blocks) {
        return Err(RunError::Config(format!(
            "{TOPK_CSV}: header does not match a {blocks}-block configuration"
        )));
    }
    let mut ranked = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 1;
        let f = |c: usize| row[c].as_str();
        let genes: Vec<f64> = (0..=blocks)
            .map(|b| field(TOPK_CSV, line, "gene", f(6 + b)))
            .collect::<Result<_, _>>()?;
        let mask_at = 7 + blocks;
        let mask: Vec<u8> = (0..blocks)
            .map(|b| field(TOPK_CSV, line, "mask", f(mask_at + b)))
            .collect::<Result<_, _>>()?;
        let weights: Vec<f64> = (0..blocks)
            .map(|b| field(TOPK_CSV, line, "weight", f(mask_at + blocks + b)))
            .collect::<Result<_, _>>()?;
        let rates: Vec<f64> = (0..blocks)
            .map(|b| field(TOPK_CSV, line, "rate", f(mask_at + 2 * blocks + b)))
            .collect::<Result<_, _>>()?;
        let genotype = Genotype::new(genes.clone())
            .map_err(|e| RunError::Config(format!("{TOPK_CSV} row {line}: {e}")))?;
        let decoded = decode(&genotype, spec).map_err(|e| RunError::Config(e.to_string()))?;
        let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        if decoded.mask != mask || !same(&decoded.weights, &weights) || !same(&decoded.rates, &rates) {
            problems.push(format!("{TOPK_CSV} row {line}: decoded columns differ from re-decoding its genes"));
        }
        ranked.push(RankedRow {
            rank: field(TOPK_CSV, line, "rank", f(0))?,
            genotype_id: field(TOPK_CSV, line, "genotype_id", f(1))?,
            generation: field(TOPK_CSV, line, "generation", f(2))?,
            fold_index: field(TOPK_CSV, line, "fold_index", f(3))?,
            phi: field(TOPK_CSV, line, "phi", f(4))?,
            accuracy: field(TOPK_CSV, line, "accuracy", f(5))?,
            genes,
            config: decoded,
        });
    }
    if ranked.windows(2).any(|w| w[0].phi > w[1].phi) {
        problems.push(format!("{TOPK_CSV}: rows are not sorted ascending by phi"));
    }

    let (_, prows) = read_rows(run_dir, PARAMS_CSV)?;
    if prows.len() != ranked.len() {
        problems.push(format!("{PARAMS_CSV}: {} rows but {TOPK_CSV} has {}", prows.len(), ranked.len()));
    }
    for (i, (row, r)) in prows.iter().zip(&ranked).enumerate() {
        let fraction: f64 = field(PARAMS_CSV, i + 1, "trainable_fraction", &row[4])?;
        let expected = trainable_fraction(&r.config, &counts).map_err(|e| RunError::Config(e.to_string()))?;
        if fraction.to_bits() != expected.to_bits() {
            problems.push(format!(
                "{PARAMS_CSV} row {}: fraction {fraction} but masks give {expected}",
                i + 1
            ));
        }
    }

    let (_, hrows) = read_rows(run_dir, HEATMAP_CSV)?;
    if hrows.len() != ranked.len() * blocks {
        problems.push(format!("{HEATMAP_CSV}: expected {} rows, found {}", ranked.len() * blocks, hrows.len()));
    }
    for (i, row) in hrows.iter().enumerate() {
        let eta: f64 = field(HEATMAP_CSV, i + 1, "eta", &row[5])?;
        if !(eta == 0.0 || (0.1..=10.0).contains(&eta)) {
            problems.push(format!("{HEATMAP_CSV} row {}: eta {eta} outside {{0}} ∪ [0.1, 10]", i + 1));
        }
        let rank: usize = field(HEATMAP_CSV, i + 1, "rank", &row[0])?;
        let block: usize = field(HEATMAP_CSV, i + 1, "block_index", &row[2])?;
        if let Some(r) = ranked.get(rank.wrapping_sub(1)) {
            if block >= blocks || r.config.eta[block].to_bits() != eta.to_bits() {
                problems.push(format!("{HEATMAP_CSV} row {}: eta disagrees with {TOPK_CSV}", i + 1));
            }
        } else {
            problems.push(format!("{HEATMAP_CSV} row {}: rank {rank} not in {TOPK_CSV}", i + 1));
        }
    }

    let (best_blocks, best_trainable_fraction) = match ranked.first() {
        Some(best) => {
            let c = &best.config;
            let table = (0..blocks)
                .map(|b| BlockRow {
                    name: spec.names()[b].clone(),
                    frozen: c.mask[b] == 0,
                    weight: c.weights[b],
                    eta: c.eta[b],
                    rate: c.rates[b],
                    params: counts[b],
                })
                .collect();
            let fraction = trainable_fraction(c, &counts).map_err(|e| RunError::Config(e.to_string()))?;
            (table, fraction)
        }
        None => (Vec::new(), 0.0),
    };

    let generations = cp
        .state
        .reports
        .iter()
        .map(|r| (r.generation, r.fold_index, r.best_phi, r.mean_phi))
        .collect();

    Ok(Summary {
        run_dir: run_dir.to_path_buf(),
        generations_done: cp.state.next_generation,
        finished: cp.finished,
        ranked,
        best_blocks,
        best_trainable_fraction,
        generations,
        problems,
    })
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "run directory: {}", self.run_dir.display())?;
        writeln!(
            f,
            "generations:   {} ({})",
            self.generations_done,
            if self.finished { "finished" } else { "incomplete" }
        )?;
        match self.best() {
            None => writeln!(f, "no evaluated configurations")?,
            Some(best) => {
                writeln!(f)?;
                writeln!(
                    f,
                    "best configuration: genotype {} (generation {}, fold {})",
                    best.genotype_id, best.generation, best.fold_index
                )?;
                writeln!(f, "  phi (minimized)      {:.6}", best.phi)?;
                writeln!(f, "  accuracy (1 - phi)   {:.6}", 1.0 - best.phi)?;
                writeln!(f, "  threshold            {:.6}", best.genes[best.genes.len() - 1])?;
                writeln!(
                    f,
                    "  trainable fraction   {:.2}%",
                    100.0 * self.best_trainable_fraction
                )?;
                writeln!(f)?;
                writeln!(
                    f,
                    "  {:<4} {:<20} {:<11} {:>8} {:>8} {:>12} {:>12}",
                    "#", "block", "state", "weight", "eta", "rate", "params"
                )?;
                for (b, row) in self.best_blocks.iter().enumerate() {
                    writeln!(
                        f,
                        "  {:<4} {:<20} {:<11} {:>8.4} {:>8.4} {:>12.4e} {:>12}",
                        b,
                        row.name,
                        if row.frozen { "frozen" } else { "fine-tuned" },
                        row.weight,
                        row.eta,
                        row.rate,
                        row.params
                    )?;
                }
            }
        }
        if !self.ranked.is_empty() {
            writeln!(f)?;
            writeln!(f, "top {} configurations:", self.ranked.len())?;
            writeln!(f, "  {:<5} {:>8} {:>10} {:>10} {:>8}", "rank", "id", "phi", "accuracy", "active")?;
            for r in &self.ranked {
                writeln!(
                    f,
                    "  {:<5} {:>8} {:>10.6} {:>10.6} {:>5}/{}",
                    r.rank,
                    r.genotype_id,
                    r.phi,
                    1.0 - r.phi,
                    r.config.active_blocks(),
                    r.config.block_count()
                )?;
            }
        }
        if !self.generations.is_empty() {
            writeln!(f)?;
            writeln!(f, "per generation:")?;
            writeln!(f, "  {:<4} {:>4} {:>10} {:>10} {:>10}", "gen", "fold", "best phi", "mean phi", "best acc")?;
            for (g, fold, best, mean) in &self.generations {
                writeln!(f, "  {g:<4} {fold:>4} {best:>10.6} {mean:>10.6} {:>10.6}", 1.0 - best)?;
            }
        }
        writeln!(f)?;
        if self.problems.is_empty() {
            writeln!(f, "artifact consistency: ok")
        } else {
            writeln!(f, "artifact consistency: {} problem(s)", self.problems.len())?;
            for p in &self.problems {
                writeln!(f, "  - {p}")?;
            }
            Ok(())
        }
    }
}
