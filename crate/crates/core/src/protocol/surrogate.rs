//! In-process fitness oracles with known optima.
//!
//! Both are pure functions of the evaluation job (rates, mask or genes,
//! seed, fold), so full-engine runs against them are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{EndpointKind, EndpointSettings, EvalJob, EvaluateResponse, ProtocolError, Trainer, TrainerError};

/// Lowest target exponent drawn for random instances. Keeping it above -1
/// leaves room for a threshold below every active gene, so the optimum is
/// reachable.
const MIN_TARGET_EXPONENT: f64 = -0.6;

/// Rewards matching a hidden freeze mask and hidden per-block rate
/// exponents.
///
/// `accuracy = 1 - hamming(mask, target)/n - c * mean_active(|log10(rate/base) - e_b|) / 2 + noise`
/// clamped to `[0, 1]`. The exponent gap is at most 2, so the penalty lies in `[0, c]`.
#[derive(Debug, Clone)]
pub struct MaskMatchSurrogate {
    target_mask: Vec<u8>,
    target_exponents: Vec<f64>,
    penalty_scale: f64,
    noise: f64,
    salt: u64,
    settings: EndpointSettings,
}

impl MaskMatchSurrogate {
    pub fn new(target_mask: Vec<u8>, target_exponents: Vec<f64>, noise: f64) -> Self {
        assert_eq!(target_mask.len(), target_exponents.len());
        Self {
            target_mask,
            target_exponents,
            penalty_scale: 0.5,
            noise,
            salt: 0,
            settings: EndpointSettings::default(),
        }
    }

    /// Random instance: fair-coin mask bits and exponents uniform on `[-0.6, 1]`.
    pub fn random(blocks: usize, instance_seed: u64, noise: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
        let target_mask = (0..blocks).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        let target_exponents = (0..blocks)
            .map(|_| rng.gen_range(MIN_TARGET_EXPONENT..=1.0))
            .collect();
        let mut s = Self::new(target_mask, target_exponents, noise);
        s.salt = instance_seed;
        s
    }

    pub fn with_penalty_scale(mut self, c: f64) -> Self {
        self.penalty_scale = c;
        self
    }

    pub fn with_settings(mut self, settings: EndpointSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn target_mask(&self) -> &[u8] {
        &self.target_mask
    }

    pub fn target_exponents(&self) -> &[f64] {
        &self.target_exponents
    }

    /// A genotype (genes) decoding to the target mask and exponents, if one exists.
    pub fn optimum_genes(&self) -> Option<Vec<f64>> {
        let active: Vec<f64> = self
            .target_mask
            .iter()
            .zip(&self.target_exponents)
            .filter(|(&m, _)| m == 1)
            .map(|(_, &e)| 0.5 + e / 2.0)
            .collect();
        let lowest = active.iter().copied().fold(1.0, f64::min);
        if lowest <= 0.0 {
            return None;
        }
        let threshold = lowest / 2.0;
        let mut genes: Vec<f64> = self
            .target_mask
            .iter()
            .zip(&self.target_exponents)
            .map(|(&m, &e)| if m == 1 { 0.5 + e / 2.0 } else { 0.0 })
            .collect();
        genes.push(threshold);
        Some(genes)
    }

    /// Noise-free accuracy of a decoded configuration.
    pub fn clean_accuracy(&self, mask: &[u8], rates: &[f64], base_rates: &[f64]) -> f64 {
        let n = self.target_mask.len();
        let hamming = mask
            .iter()
            .zip(&self.target_mask)
            .filter(|(a, b)| a != b)
            .count();
        let gaps: Vec<f64> = mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 1)
            .map(|(b, _)| ((rates[b] / base_rates[b]).log10() - self.target_exponents[b]).abs())
            .collect();
        let penalty = if gaps.is_empty() {
            0.0
        } else {
            self.penalty_scale * (gaps.iter().sum::<f64>() / gaps.len() as f64) / 2.0
        };
        (1.0 - hamming as f64 / n as f64 - penalty).clamp(0.0, 1.0)
    }

    fn noise_for(&self, job: &EvalJob<'_>) -> f64 {
        if self.noise == 0.0 {
            return 0.0;
        }
        let req = job.request;
        let mut h = Sha256::new();
        h.update(self.salt.to_le_bytes());
        h.update(req.seed.to_le_bytes());
        h.update((req.fold_index as u64).to_le_bytes());
        h.update(&req.frozen_mask);
        for r in &req.block_rates {
            h.update(r.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        let seed = u64::from_le_bytes(digest[..8].try_into().unwrap());
        let z: f64 = ChaCha8Rng::seed_from_u64(seed).sample(StandardNormal);
        z * self.noise
    }
}

impl Trainer for MaskMatchSurrogate {
    fn kind(&self) -> EndpointKind {
        EndpointKind::Surrogate
    }

    fn settings(&self) -> &EndpointSettings {
        &self.settings
    }

    fn evaluate(&self, job: &EvalJob<'_>) -> Result<EvaluateResponse, TrainerError> {
        let req = job.request;
        req.validate()?;
        if req.frozen_mask.len() != self.target_mask.len() || job.base_rates.len() != self.target_mask.len() {
            return Err(ProtocolError::Violation(format!(
                "surrogate expects {} blocks, request has {}",
                self.target_mask.len(),
                req.frozen_mask.len()
            ))
            .into());
        }
        let clean = self.clean_accuracy(&req.frozen_mask, &req.block_rates, job.base_rates);
        let acc = (clean + self.noise_for(job)).clamp(0.0, 1.0);
        Ok(EvaluateResponse::ok(req.request_id.clone(), acc, req.max_epochs))
    }
}

/// `accuracy = 1 - ||genes - optimum||^2 / len`, deterministic.
#[derive(Debug, Clone)]
pub struct SphereSurrogate {
    optimum: Vec<f64>,
    settings: EndpointSettings,
}

impl SphereSurrogate {
    pub fn new(optimum: Vec<f64>) -> Self {
        assert!(optimum.iter().all(|x| (0.0..=1.0).contains(x)), "optimum must lie in [0,1]");
        Self {
            optimum,
            settings: EndpointSettings::default(),
        }
    }

    pub fn random(genes: usize, instance_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);
        Self::new((0..genes).map(|_| rng.gen::<f64>()).collect())
    }

    pub fn with_settings(mut self, settings: EndpointSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn optimum(&self) -> &[f64] {
        &self.optimum
    }

    pub fn accuracy(&self, genes: &[f64]) -> f64 {
        let sq: f64 = genes
            .iter()
            .zip(&self.optimum)
            .map(|(g, o)| (g - o) * (g - o))
            .sum();
        1.0 - sq / self.optimum.len() as f64
    }
}

impl Trainer for SphereSurrogate {
    fn kind(&self) -> EndpointKind {
        EndpointKind::Surrogate
    }

    fn settings(&self) -> &EndpointSettings {
        &self.settings
    }

    fn evaluate(&self, job: &EvalJob<'_>) -> Result<EvaluateResponse, TrainerError> {
        if job.genes.len() != self.optimum.len() {
            return Err(ProtocolError::Violation(format!(
                "sphere surrogate expects {} genes, got {}",
                self.optimum.len(),
                job.genes.len()
            ))
            .into());
        }
        let acc = self.accuracy(job.genes);
        Ok(EvaluateResponse::ok(job.request.request_id.clone(), acc, job.request.max_epochs))
    }
}
