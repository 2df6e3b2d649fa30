//! Class-stratified folds over training-sample identifiers and the
//! generation-to-fold schedule.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("fold_count must be at least 1, got {0}")]
    BadFoldCount(usize),
    #[error("no samples to partition")]
    Empty,
    #[error("labels file {path}: line {line}: {reason}")]
    LabelsFile {
        path: String,
        line: u64,
        reason: String,
    },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("reading labels: {0}")]
    Io(#[from] std::io::Error),
}

/// Stratified assignment of sample ids to `fold_count` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub fold_count: usize,
    /// Sample ids per fold, sorted.
    pub folds: Vec<Vec<String>>,
    pub class_of: BTreeMap<String, String>,
    /// Classes with fewer samples than folds; still balanced within 1.
    #[serde(default)]
    pub sparse_classes: Vec<String>,
}

/// Labels keyed by sample id.
pub type Labels = BTreeMap<String, String>;

/// Shuffles each class with a seeded generator, then deals its samples
/// round-robin across folds. The dealing position carries over from one
/// class to the next so fold sizes also stay within 1 of each other.
pub fn build_partition(labels: &Labels, fold_count: usize, seed: u64) -> Result<PartitionPlan, PartitionError> {
    if fold_count < 1 {
        return Err(PartitionError::BadFoldCount(fold_count));
    }
    if labels.is_empty() {
        return Err(PartitionError::Empty);
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, class) in labels {
        by_class.entry(class.as_str()).or_default().push(id.as_str());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<String>> = vec![Vec::new(); fold_count];
    let mut sparse_classes = Vec::new();
    let mut cursor = 0usize;
    for (class, mut ids) in by_class {
        if ids.len() < fold_count {
            log::warn!(
                "class {class:?} has {} samples for {fold_count} folds; some folds get none",
                ids.len()
            );
            sparse_classes.push(class.to_string());
        }
        ids.shuffle(&mut rng);
        for id in ids {
            folds[cursor].push(id.to_string());
            cursor = (cursor + 1) % fold_count;
        }
    }
    for fold in &mut folds {
        fold.sort();
    }
    Ok(PartitionPlan {
        fold_count,
        folds,
        class_of: labels.clone(),
        sparse_classes,
    })
}

/// Fold evaluated at `generation`: `generation mod fold_count`.
pub fn fold_for_generation(generation: usize, fold_count: usize) -> usize {
    assert!(fold_count >= 1, "fold_count must be at least 1");
    generation % fold_count
}

impl PartitionPlan {
    pub fn fold(&self, index: usize) -> &[String] {
        &self.folds[index]
    }

    pub fn sample_count(&self) -> usize {
        self.class_of.len()
    }

    /// Per-fold counts of every class.
    pub fn class_counts(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut counts: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (fi, fold) in self.folds.iter().enumerate() {
            for id in fold {
                let class = self.class_of[id].as_str();
                counts.entry(class).or_insert_with(|| vec![0; self.fold_count])[fi] += 1;
            }
        }
        counts
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("plan serializes");
        hex(&Sha256::digest(bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads `sample_id,class_label` lines. Blank lines are skipped.
pub fn read_labels_file(path: &Path) -> Result<Labels, PartitionError> {
    let text = std::fs::read_to_string(path)?;
    parse_labels(&text, &path.display().to_string())
}

pub fn parse_labels(text: &str, source: &str) -> Result<Labels, PartitionError> {
    let mut labels = Labels::new();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    for record in reader.records() {
        let record = record.map_err(|e| PartitionError::LabelsFile {
            path: source.to_string(),
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 || record[0].is_empty() || record[1].is_empty() {
            return Err(PartitionError::LabelsFile {
                path: source.to_string(),
                line,
                reason: "expected `sample_id,class_label`".into(),
            });
        }
        if labels.insert(record[0].to_string(), record[1].to_string()).is_some() {
            return Err(PartitionError::DuplicateId(record[0].to_string()));
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(spec: &[(&str, usize)]) -> Labels {
        let mut out = Labels::new();
        for (class, n) in spec {
            for i in 0..*n {
                out.insert(format!("{class}{i:03}"), class.to_string());
            }
        }
        out
    }

    /// Brute-force check of disjointness, coverage and per-class balance.
    fn check_plan(labels: &Labels, plan: &PartitionPlan) {
        let mut all: Vec<&String> = plan.folds.iter().flatten().collect();
        all.sort();
        let expected: Vec<&String> = labels.keys().collect();
        assert_eq!(all, expected);
        for (_, counts) in plan.class_counts() {
            let max = counts.iter().max().unwrap();
            let min = counts.iter().min().unwrap();
            assert!(max - min <= 1, "{counts:?}");
        }
        // classes absent from class_counts are absent from every fold, which
        // can only happen if they have no samples.
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn two_balanced_classes() {
        let l = labels(&[("A", 5), ("B", 5)]);
        let plan = build_partition(&l, 2, 7).unwrap();
        check_plan(&l, &plan);
        assert_eq!(plan.folds[0].len(), 5);
        assert_eq!(plan.folds[1].len(), 5);
    }

    #[test]
    fn single_fold_holds_everything() {
        let l = labels(&[("A", 3), ("B", 4)]);
        let plan = build_partition(&l, 1, 0).unwrap();
        assert_eq!(plan.folds.len(), 1);
        assert_eq!(plan.folds[0].len(), 7);
    }

    #[test]
    fn seven_into_three() {
        let l = labels(&[("A", 7)]);
        let plan = build_partition(&l, 3, 11).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 3]);
    }

    #[test]
    fn sparse_class_flagged_but_valid() {
        let l = labels(&[("A", 2), ("B", 9)]);
        let plan = build_partition(&l, 4, 3).unwrap();
        check_plan(&l, &plan);
        assert_eq!(plan.sparse_classes, vec!["A".to_string()]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            build_partition(&labels(&[("A", 2)]), 0, 0),
            Err(PartitionError::BadFoldCount(0))
        ));
        assert!(matches!(build_partition(&Labels::new(), 2, 0), Err(PartitionError::Empty)));
    }

    #[test]
    fn schedule() {
        assert_eq!(fold_for_generation(5, 3), 2);
        assert_eq!(fold_for_generation(0, 4), 0);
        assert_eq!(fold_for_generation(9, 3), 0);
    }

    #[test]
    fn seeds_change_assignment_deterministically() {
        let l = labels(&[("A", 20), ("B", 13)]);
        let a = build_partition(&l, 3, 1).unwrap();
        let b = build_partition(&l, 3, 1).unwrap();
        let c = build_partition(&l, 3, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.folds, c.folds);
    }

    #[test]
    fn labels_parsing() {
        let l = parse_labels("s1,cat\n s2 , dog\n\ns3,cat\n", "inline").unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(l["s2"], "dog");
        assert!(matches!(
            parse_labels("s1,cat\ns1,dog\n", "inline"),
            Err(PartitionError::DuplicateId(_))
        ));
        let err = parse_labels("s1,cat\ns2\n", "inline").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    proptest! {
        #[test]
        fn stratified_properties(
            class_sizes in prop::collection::vec(1usize..60, 1..8),
            fold_count in 1usize..10,
            seed in any::<u64>(),
        ) {
            let spec: Vec<(String, usize)> = class_sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| (format!("c{i}_"), n))
                .collect();
            let spec_ref: Vec<(&str, usize)> = spec.iter().map(|(c, n)| (c.as_str(), *n)).collect();
            let l = labels(&spec_ref);
            let plan = build_partition(&l, fold_count, seed).unwrap();
            check_plan(&l, &plan);
            prop_assert_eq!(plan, build_partition(&l, fold_count, seed).unwrap());
        }

        #[test]
        fn schedule_periodic(g in 0usize..10_000, n in 1usize..50) {
            prop_assert_eq!(fold_for_generation(g, n), fold_for_generation(g + n, n));
        }
    }
}
