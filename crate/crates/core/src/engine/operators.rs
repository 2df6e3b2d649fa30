//! Variation and selection operators.
//!
//! Every operator returns genotypes whose genes lie in `[0, 1]`; additive
//! perturbations are clamped at the bounds.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

use crate::genotype::{Genotype, GenotypeError};

/// An evaluated member of the population.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<'a> {
    pub id: u64,
    pub genotype: &'a Genotype,
    pub phi: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SelectionError {
    #[error("elite_count {elite_count} must be smaller than population size {population}")]
    TooManyElites { elite_count: usize, population: usize },
}

/// `population_size` genotypes of `block_count + 1` genes, each uniform on `[0, 1]`.
pub fn initialize_population<R: Rng + ?Sized>(population_size: usize, block_count: usize, rng: &mut R) -> Vec<Genotype> {
    (0..population_size)
        .map(|_| random_genotype(block_count + 1, rng))
        .collect()
}

pub fn random_genotype<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Genotype {
    Genotype::clamped((0..len).map(|_| rng.gen::<f64>()).collect())
}

/// Orders by ascending phi, ties by ascending id.
pub fn rank<'a>(population: &[Scored<'a>]) -> Vec<Scored<'a>> {
    let mut sorted = population.to_vec();
    sorted.sort_by(|a, b| a.phi.total_cmp(&b.phi).then(a.id.cmp(&b.id)));
    sorted
}

/// The `elite_count` individuals with the smallest phi.
pub fn select_elites<'a>(population: &[Scored<'a>], elite_count: usize) -> Result<Vec<Scored<'a>>, SelectionError> {
    if elite_count >= population.len() {
        return Err(SelectionError::TooManyElites {
            elite_count,
            population: population.len(),
        });
    }
    let mut ranked = rank(population);
    ranked.truncate(elite_count);
    Ok(ranked)
}

/// Local search: uniform noise on `[-radius, radius]` per gene.
pub fn exploitation<R: Rng + ?Sized>(elite: &Genotype, radius: f64, rng: &mut R) -> Genotype {
    let genes = elite
        .genes()
        .iter()
        .map(|&g| {
            if radius > 0.0 {
                g + rng.gen_range(-radius..=radius)
            } else {
                g
            }
        })
        .collect();
    Genotype::clamped(genes)
}

/// Uniform crossover: each gene from either parent with probability 1/2.
pub fn crossover<R: Rng + ?Sized>(a: &Genotype, b: &Genotype, rng: &mut R) -> Result<Genotype, GenotypeError> {
    if a.len() != b.len() {
        return Err(GenotypeError::LengthMismatch {
            genes: b.len(),
            blocks: a.block_count(),
            expected: a.len(),
        });
    }
    let genes = a
        .genes()
        .iter()
        .zip(b.genes())
        .map(|(&x, &y)| if rng.gen_bool(0.5) { x } else { y })
        .collect();
    Ok(Genotype::clamped(genes))
}

/// Each gene, with probability `rate`, gets additive N(0, scale^2) noise.
pub fn mutation<R: Rng + ?Sized>(genotype: &Genotype, rate: f64, scale: f64, rng: &mut R) -> Genotype {
    let normal = Normal::new(0.0, scale).expect("scale is positive and finite");
    let genes = genotype
        .genes()
        .iter()
        .map(|&g| {
            if rng.gen_bool(rate) {
                g + normal.sample(rng)
            } else {
                g
            }
        })
        .collect();
    Genotype::clamped(genes)
}

/// Replaces the `count` worst individuals (largest phi, ties by larger
/// id) with fresh uniform genotypes. Returns the whole population in input
/// order, plus the positions that were replaced.
pub fn adaptation<R: Rng + ?Sized>(population: &[Scored<'_>], count: usize, rng: &mut R) -> (Vec<Genotype>, Vec<usize>) {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&i, &j| {
        population[j]
            .phi
            .total_cmp(&population[i].phi)
            .then(population[j].id.cmp(&population[i].id))
    });
    let mut replaced: Vec<usize> = order.into_iter().take(count).collect();
    replaced.sort_unstable();
    let mut out: Vec<Genotype> = population.iter().map(|s| s.genotype.clone()).collect();
    for &i in &replaced {
        out[i] = random_genotype(out[i].len(), rng);
    }
    (out, replaced)
}

/// Pluggable variation strategy used by the engine.
pub trait Operators: Send + Sync {
    fn exploit(&self, elite: &Genotype, radius: f64, rng: &mut dyn RngCore) -> Genotype;
    fn crossover(&self, a: &Genotype, b: &Genotype, rng: &mut dyn RngCore) -> Genotype;
    fn mutate(&self, g: &Genotype, rate: f64, scale: f64, rng: &mut dyn RngCore) -> Genotype;
    fn adapt(&self, population: &[Scored<'_>], count: usize, rng: &mut dyn RngCore) -> (Vec<Genotype>, Vec<usize>);
}

/// Shrinking uniform local search, uniform crossover, clamped Gaussian
/// mutation and uniform resampling.
#[derive(Debug, Default, Clone, Copy)]
pub struct StandardOperators;

impl Operators for StandardOperators {
    fn exploit(&self, elite: &Genotype, radius: f64, rng: &mut dyn RngCore) -> Genotype {
        exploitation(elite, radius, rng)
    }

    fn crossover(&self, a: &Genotype, b: &Genotype, rng: &mut dyn RngCore) -> Genotype {
        crossover(a, b, rng).expect("population genotypes share one length")
    }

    fn mutate(&self, g: &Genotype, rate: f64, scale: f64, rng: &mut dyn RngCore) -> Genotype {
        mutation(g, rate, scale, rng)
    }

    fn adapt(&self, population: &[Scored<'_>], count: usize, rng: &mut dyn RngCore) -> (Vec<Genotype>, Vec<usize>) {
        adaptation(population, count, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn g(genes: &[f64]) -> Genotype {
        Genotype::new(genes.to_vec()).unwrap()
    }

    fn scored<'a>(genotypes: &'a [Genotype], phis: &[f64]) -> Vec<Scored<'a>> {
        genotypes
            .iter()
            .zip(phis)
            .enumerate()
            .map(|(i, (genotype, &phi))| Scored {
                id: i as u64,
                genotype,
                phi,
            })
            .collect()
    }

    #[test]
    fn init_shapes_and_determinism() {
        let a = initialize_population(10, 17, &mut rng(4));
        let b = initialize_population(10, 17, &mut rng(4));
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.iter().all(|x| x.len() == 18));
    }

    #[test]
    fn init_gene_mean_is_half() {
        let pop = initialize_population(1000, 9, &mut rng(1));
        let genes: Vec<f64> = pop.iter().flat_map(|x| x.genes().to_vec()).collect();
        assert_eq!(genes.len(), 10_000);
        let mean = genes.iter().sum::<f64>() / genes.len() as f64;
        assert!((0.48..=0.52).contains(&mean), "{mean}");
    }

    #[test]
    fn elites_by_phi() {
        let gs: Vec<Genotype> = (0..3).map(|_| g(&[0.5, 0.5])).collect();
        let pop = scored(&gs, &[0.3, 0.1, 0.2]);
        let elites = select_elites(&pop, 2).unwrap();
        assert_eq!(elites.iter().map(|s| s.phi).collect::<Vec<_>>(), vec![0.1, 0.2]);
    }

    #[test]
    fn elite_ties_by_id() {
        let gs: Vec<Genotype> = (0..5).map(|_| g(&[0.5, 0.5])).collect();
        let pop = scored(&gs, &[0.4; 5]);
        let ids: Vec<u64> = select_elites(&pop, 3).unwrap().iter().map(|s| s.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        assert!(select_elites(&pop, 5).is_err());
    }

    #[test]
    fn elites_match_full_sort() {
        let mut r = rng(8);
        let gs: Vec<Genotype> = (0..10).map(|_| g(&[0.5, 0.5])).collect();
        for _ in 0..50 {
            let phis: Vec<f64> = (0..10).map(|_| r.gen()).collect();
            let pop = scored(&gs, &phis);
            let mut brute: Vec<(f64, u64)> = phis.iter().enumerate().map(|(i, &p)| (p, i as u64)).collect();
            brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let got: Vec<u64> = select_elites(&pop, 3).unwrap().iter().map(|s| s.id).collect();
            let want: Vec<u64> = brute[..3].iter().map(|x| x.1).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn exploitation_examples() {
        let elite = g(&[0.2, 0.4, 0.9]);
        assert_eq!(exploitation(&elite, 0.0, &mut rng(0)), elite);
        let floor = g(&[0.0, 0.0, 0.0]);
        for seed in 0..100 {
            let c = exploitation(&floor, 0.3, &mut rng(seed));
            assert!(c.genes().iter().all(|&x| (0.0..=0.3).contains(&x)));
        }
        let mut r = rng(5);
        for _ in 0..1000 {
            let c = exploitation(&elite, 0.25, &mut r);
            for (a, b) in c.genes().iter().zip(elite.genes()) {
                assert!((a - b).abs() <= 0.25 + 1e-15);
            }
        }
    }

    #[test]
    fn crossover_examples() {
        let a = g(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(crossover(&a, &a, &mut rng(0)).unwrap(), a);
        let b = g(&[0.9, 0.8, 0.7, 0.6]);
        let mut r = rng(3);
        let mut from_a = [0usize; 4];
        let trials = 10_000;
        for _ in 0..trials {
            let c = crossover(&a, &b, &mut r).unwrap();
            for (i, &x) in c.genes().iter().enumerate() {
                assert!(x == a.genes()[i] || x == b.genes()[i]);
                if x == a.genes()[i] {
                    from_a[i] += 1;
                }
            }
        }
        for n in from_a {
            let p = n as f64 / trials as f64;
            assert!((0.47..=0.53).contains(&p), "{p}");
        }
        assert!(crossover(&a, &g(&[0.1, 0.2]), &mut r).is_err());
    }

    #[test]
    fn mutation_examples() {
        let x = g(&[0.1, 0.5, 0.9]);
        assert_eq!(mutation(&x, 0.0, 0.25, &mut rng(0)), x);
        let mut r = rng(6);
        for _ in 0..200 {
            let m = mutation(&x, 1.0, 5.0, &mut r);
            assert!(m.genes().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let base = Genotype::new(vec![0.5; 10_000]).unwrap();
        let m = mutation(&base, 0.5, 0.25, &mut r);
        let changed = m.genes().iter().filter(|&&v| v != 0.5).count();
        let frac = changed as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&frac), "{frac}");
    }

    #[test]
    fn adaptation_examples() {
        let gs: Vec<Genotype> = (0..10).map(|i| g(&[f64::from(i) / 10.0, 0.5])).collect();
        let mut r = rng(2);
        let phis: Vec<f64> = (0..10).map(|_| r.gen()).collect();
        let pop = scored(&gs, &phis);

        let (same, replaced) = adaptation(&pop, 0, &mut r);
        assert!(replaced.is_empty());
        assert_eq!(same, gs);

        let (out, replaced) = adaptation(&pop, 4, &mut r);
        let mut by_phi: Vec<usize> = (0..10).collect();
        by_phi.sort_by(|&i, &j| phis[j].partial_cmp(&phis[i]).unwrap());
        let mut worst: Vec<usize> = by_phi[..4].to_vec();
        worst.sort_unstable();
        assert_eq!(replaced, worst);
        for i in 0..10 {
            if replaced.contains(&i) {
                assert_ne!(out[i], gs[i]);
            } else {
                assert_eq!(out[i], gs[i]);
            }
        }

        // pop - elites: every non-elite resampled.
        let (_, replaced) = adaptation(&pop, 7, &mut r);
        let elites: Vec<usize> = select_elites(&pop, 3).unwrap().iter().map(|s| s.id as usize).collect();
        assert!(replaced.iter().all(|i| !elites.contains(i)));
        assert_eq!(replaced.len(), 7);
    }

    proptest! {
        #[test]
        fn operators_preserve_closure(
            genes in prop::collection::vec(0.0f64..=1.0, 2..20),
            other in prop::collection::vec(0.0f64..=1.0, 20),
            radius in 0.0f64..1.0,
            rate in 0.0f64..=1.0,
            scale in 1e-3f64..3.0,
            seed in any::<u64>(),
        ) {
            let a = Genotype::new(genes.clone()).unwrap();
            let b = Genotype::new(other[..genes.len()].to_vec()).unwrap();
            let mut r = rng(seed);
            let outs = [
                exploitation(&a, radius, &mut r),
                crossover(&a, &b, &mut r).unwrap(),
                mutation(&a, rate, scale, &mut r),
            ];
            for o in outs {
                prop_assert_eq!(o.len(), a.len());
                prop_assert!(o.genes().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
