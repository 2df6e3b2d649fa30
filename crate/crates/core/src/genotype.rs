//! Genotype encoding and decoding into per-block fine-tuning configurations.
//!
//! A genotype for a model split into `n` blocks carries `n + 1` genes in
//! `[0, 1]`: one importance gene per block followed by the freezing
//! threshold. Decoding yields a selection mask (`gene > threshold`), an
//! importance weight `10^(2(gene - 0.5))` in `[0.1, 10]`, their product
//! `eta`, and the effective rate `eta * base_rate`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower bound of the importance weight (gene = 0).
pub const MIN_WEIGHT: f64 = 0.1;
/// Upper bound of the importance weight (gene = 1).
pub const MAX_WEIGHT: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenotypeError {
    #[error("genotype needs at least 2 genes (one block plus threshold), got {0}")]
    TooShort(usize),
    #[error("gene {index} = {value} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("genotype has {genes} genes but block spec has {blocks} blocks (expected {expected} genes)")]
    LengthMismatch {
        genes: usize,
        blocks: usize,
        expected: usize,
    },
    #[error("block spec must contain at least one block")]
    NoBlocks,
    #[error("base rate for block {index} must be positive and finite, got {value}")]
    BadBaseRate { index: usize, value: f64 },
    #[error("block spec has {rates} base rates and {names} names; both must equal block count {count}")]
    SpecShape {
        count: usize,
        rates: usize,
        names: usize,
    },
    #[error("expected {expected} parameter counts, got {got}")]
    ParamCountLength { expected: usize, got: usize },
    #[error("total parameter count is zero; trainable fraction is undefined")]
    ZeroParams,
}

/// Importance genes followed by the freezing threshold gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Genotype {
    genes: Vec<f64>,
}

impl Genotype {
    pub fn new(genes: Vec<f64>) -> Result<Self, GenotypeError> {
        if genes.len() < 2 {
            return Err(GenotypeError::TooShort(genes.len()));
        }
        for (index, &value) in genes.iter().enumerate() {
            // NaN fails this comparison too.
            if !(0.0..=1.0).contains(&value) {
                return Err(GenotypeError::OutOfRange { index, value });
            }
        }
        Ok(Self { genes })
    }

    /// Builds a genotype by clamping every gene into `[0, 1]`.
    ///
    /// Used by the variation operators; NaN genes are mapped to 0.
    pub fn clamped(genes: Vec<f64>) -> Self {
        let genes = genes
            .into_iter()
            .map(|g| if g.is_nan() { 0.0 } else { g.clamp(0.0, 1.0) })
            .collect::<Vec<_>>();
        assert!(genes.len() >= 2, "genotype needs at least 2 genes");
        Self { genes }
    }

    pub fn genes(&self) -> &[f64] {
        &self.genes
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    /// Number of blocks encoded (all genes except the threshold).
    pub fn block_count(&self) -> usize {
        self.genes.len() - 1
    }

    pub fn importance(&self) -> &[f64] {
        &self.genes[..self.genes.len() - 1]
    }

    pub fn threshold(&self) -> f64 {
        self.genes[self.genes.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for Genotype {
    type Error = GenotypeError;

    fn try_from(genes: Vec<f64>) -> Result<Self, Self::Error> {
        Genotype::new(genes)
    }
}

impl From<Genotype> for Vec<f64> {
    fn from(g: Genotype) -> Self {
        g.genes
    }
}

/// Block grouping of the model: display names and base learning rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    names: Vec<String>,
    base_rates: Vec<f64>,
}

impl BlockSpec {
    pub fn new(names: Vec<String>, base_rates: Vec<f64>) -> Result<Self, GenotypeError> {
        if base_rates.is_empty() {
            return Err(GenotypeError::NoBlocks);
        }
        if names.len() != base_rates.len() {
            return Err(GenotypeError::SpecShape {
                count: base_rates.len(),
                rates: base_rates.len(),
                names: names.len(),
            });
        }
        for (index, &value) in base_rates.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(GenotypeError::BadBaseRate { index, value });
            }
        }
        Ok(Self { names, base_rates })
    }

    /// `count` blocks named `block0..` sharing one base rate.
    pub fn uniform(count: usize, base_rate: f64) -> Result<Self, GenotypeError> {
        let names = (0..count).map(|i| format!("block{i}")).collect();
        Self::new(names, vec![base_rate; count])
    }

    pub fn block_count(&self) -> usize {
        self.base_rates.len()
    }

    /// Genes per genotype: one per block plus the threshold.
    pub fn genotype_len(&self) -> usize {
        self.block_count() + 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn base_rates(&self) -> &[f64] {
        &self.base_rates
    }
}

/// Decoded phenotype of a genotype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneConfig {
    pub mask: Vec<u8>,
    pub weights: Vec<f64>,
    pub eta: Vec<f64>,
    pub rates: Vec<f64>,
}

impl FineTuneConfig {
    pub fn block_count(&self) -> usize {
        self.mask.len()
    }

    pub fn active_blocks(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

/// 1 where the block's importance gene exceeds the threshold, 0 otherwise.
/// Equality freezes the block.
pub fn selection_mask(genotype: &Genotype) -> Vec<u8> {
    let threshold = genotype.threshold();
    genotype
        .importance()
        .iter()
        .map(|&g| u8::from(g > threshold))
        .collect()
}

pub fn importance_weight(gene: f64) -> f64 {
    10f64.powf(2.0 * (gene - 0.5))
}

pub fn importance_weights(genotype: &Genotype) -> Vec<f64> {
    genotype
        .importance()
        .iter()
        .map(|&g| importance_weight(g))
        .collect()
}

pub fn decode(genotype: &Genotype, spec: &BlockSpec) -> Result<FineTuneConfig, GenotypeError> {
    if genotype.len() != spec.genotype_len() {
        return Err(GenotypeError::LengthMismatch {
            genes: genotype.len(),
            blocks: spec.block_count(),
            expected: spec.genotype_len(),
        });
    }
    let mask = selection_mask(genotype);
    let weights = importance_weights(genotype);
    let eta: Vec<f64> = mask
        .iter()
        .zip(&weights)
        .map(|(&m, &w)| f64::from(m) * w)
        .collect();
    let rates = eta
        .iter()
        .zip(spec.base_rates())
        .map(|(&e, &base)| e * base)
        .collect();
    Ok(FineTuneConfig {
        mask,
        weights,
        eta,
        rates,
    })
}

/// Share of parameters left trainable by `config`'s mask.
pub fn trainable_fraction(config: &FineTuneConfig, param_counts: &[u64]) -> Result<f64, GenotypeError> {
    if param_counts.len() != config.block_count() {
        return Err(GenotypeError::ParamCountLength {
            expected: config.block_count(),
            got: param_counts.len(),
        });
    }
    let total: u128 = param_counts.iter().map(|&c| u128::from(c)).sum();
    if total == 0 {
        return Err(GenotypeError::ZeroParams);
    }
    let trainable: u128 = config
        .mask
        .iter()
        .zip(param_counts)
        .filter(|(&m, _)| m == 1)
        .map(|(_, &c)| u128::from(c))
        .sum();
    if trainable == total {
        return Ok(1.0);
    }
    Ok(trainable as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(genes: &[f64]) -> Genotype {
        Genotype::new(genes.to_vec()).unwrap()
    }

    #[test]
    fn mask_examples() {
        assert_eq!(selection_mask(&g(&[0.3, 0.5])), vec![0]);
        assert_eq!(selection_mask(&g(&[0.5, 0.5])), vec![0]);
        assert_eq!(selection_mask(&g(&[0.9, 0.0])), vec![1]);
    }

    #[test]
    fn weight_examples() {
        assert!((importance_weight(0.5) - 1.0).abs() < 1e-12);
        assert!((importance_weight(1.0) - 10.0).abs() < 1e-12);
        assert!((importance_weight(0.0) - 0.1).abs() < 1e-12);
        // 10^0.5 = 3.16227766016837933200 (mpmath, 30 digits)
        assert!((importance_weight(0.75) - 3.162_277_660_168_379).abs() < 1e-12);
    }

    #[test]
    fn decode_two_block_example() {
        let spec = BlockSpec::uniform(2, 0.001).unwrap();
        let cfg = decode(&g(&[0.8, 0.2, 0.5]), &spec).unwrap();
        assert_eq!(cfg.mask, vec![1, 0]);
        // 10^0.6 = 3.98107170553497230416 (mpmath, 30 digits)
        assert!((cfg.weights[0] - 3.981_071_705_534_972_3).abs() < 1e-12);
        assert!((cfg.rates[0] - 0.003_981_071_705_534_972_3).abs() < 1e-15);
        assert_eq!(cfg.rates[1], 0.0);
        assert_eq!(cfg.eta[1], 0.0);
    }

    #[test]
    fn all_half_genes_freeze_everything() {
        let spec = BlockSpec::uniform(4, 0.01).unwrap();
        let cfg = decode(&g(&[0.5; 5]), &spec).unwrap();
        assert!(cfg.mask.iter().all(|&m| m == 0));
        assert!(cfg.rates.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn unit_base_rates_give_weights() {
        let spec = BlockSpec::uniform(3, 1.0).unwrap();
        let cfg = decode(&g(&[0.1, 0.6, 0.99, 0.0]), &spec).unwrap();
        assert_eq!(cfg.rates, cfg.weights);
    }

    #[test]
    fn decode_length_mismatch() {
        let spec = BlockSpec::uniform(3, 1.0).unwrap();
        let err = decode(&g(&[0.1, 0.2]), &spec).unwrap_err();
        assert!(matches!(err, GenotypeError::LengthMismatch { .. }));
    }

    #[test]
    fn malformed_genotypes_rejected() {
        assert!(matches!(Genotype::new(vec![0.2]), Err(GenotypeError::TooShort(1))));
        assert!(matches!(
            Genotype::new(vec![0.2, 1.5]),
            Err(GenotypeError::OutOfRange { index: 1, .. })
        ));
        assert!(Genotype::new(vec![f64::NAN, 0.5]).is_err());
    }

    #[test]
    fn bad_block_specs() {
        assert!(matches!(BlockSpec::uniform(0, 1.0), Err(GenotypeError::NoBlocks)));
        assert!(matches!(
            BlockSpec::uniform(2, 0.0),
            Err(GenotypeError::BadBaseRate { .. })
        ));
        assert!(BlockSpec::new(vec!["a".into()], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn trainable_fraction_examples() {
        let spec = BlockSpec::uniform(2, 1.0).unwrap();
        let all = decode(&g(&[0.9, 0.9, 0.1]), &spec).unwrap();
        assert_eq!(trainable_fraction(&all, &[5, 7]).unwrap(), 1.0);
        let none = decode(&g(&[0.1, 0.1, 0.9]), &spec).unwrap();
        assert_eq!(trainable_fraction(&none, &[5, 7]).unwrap(), 0.0);
        let half = decode(&g(&[0.1, 0.9, 0.5]), &spec).unwrap();
        assert_eq!(half.mask, vec![0, 1]);
        assert!((trainable_fraction(&half, &[300, 700]).unwrap() - 0.7).abs() < 1e-15);
        assert!(matches!(
            trainable_fraction(&half, &[0, 0]),
            Err(GenotypeError::ZeroParams)
        ));
        assert!(trainable_fraction(&half, &[1]).is_err());
    }

    #[test]
    fn serde_rejects_out_of_range() {
        let ok: Genotype = serde_json::from_str("[0.1,0.2]").unwrap();
        assert_eq!(ok.genes(), &[0.1, 0.2]);
        assert!(serde_json::from_str::<Genotype>("[0.1,2.0]").is_err());
    }

    fn genotype_strategy() -> impl Strategy<Value = Genotype> {
        prop::collection::vec(0.0f64..=1.0, 2..24).prop_map(|v| Genotype::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn decoded_invariants(genotype in genotype_strategy(), base in 1e-6f64..1.0) {
            let spec = BlockSpec::uniform(genotype.block_count(), base).unwrap();
            let cfg = decode(&genotype, &spec).unwrap();
            for b in 0..cfg.block_count() {
                prop_assert_eq!(cfg.eta[b], f64::from(cfg.mask[b]) * cfg.weights[b]);
                prop_assert_eq!(cfg.rates[b], cfg.eta[b] * base);
                prop_assert_eq!(cfg.mask[b] == 1, genotype.genes()[b] > genotype.threshold());
                prop_assert!(cfg.weights[b] >= MIN_WEIGHT - 1e-12 && cfg.weights[b] <= MAX_WEIGHT + 1e-12);
                if cfg.mask[b] == 0 {
                    prop_assert_eq!(cfg.rates[b], 0.0);
                }
            }
            prop_assert_eq!(decode(&genotype, &spec).unwrap(), cfg);
        }

        #[test]
        fn weight_symmetry(x in 0.0f64..=1.0) {
            prop_assert!((importance_weight(x) * importance_weight(1.0 - x) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn eta_monotone_in_gene(mut genes in prop::collection::vec(0.0f64..=1.0, 3..10), bump in 0.0f64..0.5) {
            let spec = BlockSpec::uniform(genes.len() - 1, 1.0).unwrap();
            let before = decode(&Genotype::new(genes.clone()).unwrap(), &spec).unwrap();
            genes[0] = (genes[0] + bump).min(1.0);
            let after = decode(&Genotype::new(genes).unwrap(), &spec).unwrap();
            prop_assert!(after.eta[0] >= before.eta[0]);
        }
    }
}
