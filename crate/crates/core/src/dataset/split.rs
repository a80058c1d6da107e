use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Sample};
use crate::flight::Label;

const TEST_FRACTION: f64 = 0.1;
const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub seed: u64,
}

impl SplitDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Largest-remainder apportionment of `total` slots over classes in proportion
/// to `class_sizes`, never giving a class more than its `caps` entry. Ties in
/// the remainder go to the lower class index.
fn apportion(total: usize, class_sizes: &[usize], caps: &[usize]) -> Vec<usize> {
    let n: usize = class_sizes.iter().sum();
    if n == 0 {
        return vec![0; class_sizes.len()];
    }
    let quotas: Vec<f64> = class_sizes
        .iter()
        .map(|&c| total as f64 * c as f64 / n as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(caps)
        .map(|(q, &cap)| (q.floor() as usize).min(cap))
        .collect();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let capacity: usize = caps.iter().sum();
    let mut remaining = total.min(capacity).saturating_sub(alloc.iter().sum::<usize>());
    for &c in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if alloc[c] < caps[c] {
            alloc[c] += 1;
            remaining -= 1;
        }
    }
    alloc
}

/// A class must appear in a split whenever its proportional share of that
/// split is at least one whole sample.
fn check_stratification(
    split: &'static str,
    split_total: usize,
    class_sizes: &[usize],
    alloc: &[usize],
) -> Result<(), DatasetError> {
    let n: usize = class_sizes.iter().sum();
    for (c, (&size, &got)) in class_sizes.iter().zip(alloc).enumerate() {
        let quota = split_total as f64 * size as f64 / n as f64;
        if quota >= 1.0 && got == 0 {
            return Err(DatasetError::Stratification {
                label: Label::from_index(c).expect("binary labels"),
                count: size,
                split,
            });
        }
    }
    Ok(())
}

/// Stratified 7:2:1 split: `test = round(0.1 N)`, `validation = round(0.2 N)`,
/// the remainder trains. Per-class counts per split are apportioned by largest
/// remainder so every class tracks the global proportion within one sample.
pub fn split_dataset(samples: &[Sample], seed: u64) -> Result<SplitDataset, DatasetError> {
    let n = samples.len();
    if n < 10 {
        return Err(DatasetError::TooFew { needed: 10, got: n });
    }
    let test_total = (TEST_FRACTION * n as f64).round() as usize;
    let validation_total = (VALIDATION_FRACTION * n as f64).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: [Vec<Sample>; 2] = [Vec::new(), Vec::new()];
    for s in samples {
        by_class[s.label.index()].push(*s);
    }
    for class in by_class.iter_mut() {
        class.shuffle(&mut rng);
    }
    let sizes = [by_class[0].len(), by_class[1].len()];

    let test_alloc = apportion(test_total, &sizes, &sizes);
    let remaining: Vec<usize> = sizes.iter().zip(&test_alloc).map(|(s, t)| s - t).collect();
    let validation_alloc = apportion(validation_total, &sizes, &remaining);
    check_stratification("test", test_total, &sizes, &test_alloc)?;
    check_stratification("validation", validation_total, &sizes, &validation_alloc)?;

    let mut split = SplitDataset {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for (c, class) in by_class.iter().enumerate() {
        let (t, v) = (test_alloc[c], validation_alloc[c]);
        split.test.extend_from_slice(&class[..t]);
        split.validation.extend_from_slice(&class[t..t + v]);
        split.train.extend_from_slice(&class[t + v..]);
    }
    let train_alloc: Vec<usize> = (0..2).map(|c| sizes[c] - test_alloc[c] - validation_alloc[c]).collect();
    let train_total = n - test_total - validation_total;
    check_stratification("train", train_total, &sizes, &train_alloc)?;

    split.train.shuffle(&mut rng);
    split.validation.shuffle(&mut rng);
    split.test.shuffle(&mut rng);
    Ok(split)
}
