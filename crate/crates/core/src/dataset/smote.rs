use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{class_counts, DatasetError, Sample, FEATURE_COUNT};
use crate::flight::Label;

pub const DEFAULT_SMOTE_K: usize = 5;

fn squared_distance(a: &[f64; FEATURE_COUNT], b: &[f64; FEATURE_COUNT]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other points, ties broken by index.
fn nearest_neighbours(points: &[[f64; FEATURE_COUNT]], k: usize) -> Vec<Vec<usize>> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut others: Vec<(f64, usize)> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, q)| (squared_distance(p, q), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Balances the two classes by synthesizing minority samples.
///
/// Synthetic sample `j` starts from minority point `j mod m`, picks one of its
/// `k` nearest minority neighbours and interpolates `x + u (x_nn - x)` with
/// `u ~ U[0, 1)`. Each synthetic sample draws from its own ChaCha stream so
/// the output does not depend on scheduling. The input samples come first,
/// unchanged and in order.
pub fn smote_oversample(samples: &[Sample], k: usize, seed: u64) -> Result<Vec<Sample>, DatasetError> {
    let (closed, open) = class_counts(samples);
    if closed == open {
        return Ok(samples.to_vec());
    }
    let (minority_label, minority_count, majority_count) = if open < closed {
        (Label::Open, open, closed)
    } else {
        (Label::Closed, closed, open)
    };
    if minority_count < 2 {
        return Err(DatasetError::InsufficientMinority(minority_count));
    }
    if k == 0 || k >= minority_count {
        return Err(DatasetError::InvalidNeighbourCount {
            k,
            minority: minority_count,
        });
    }
    let minority: Vec<[f64; FEATURE_COUNT]> = samples
        .iter()
        .filter(|s| s.label == minority_label)
        .map(|s| s.features)
        .collect();
    let neighbours = nearest_neighbours(&minority, k);

    let needed = majority_count - minority_count;
    let synthetic: Vec<Sample> = (0..needed)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let base = j % minority.len();
            let nn = neighbours[base][rng.random_range(0..k)];
            let u: f64 = rng.random();
            let (x, x_nn) = (&minority[base], &minority[nn]);
            let mut features = [0.0; FEATURE_COUNT];
            for i in 0..FEATURE_COUNT {
                features[i] = x[i] + u * (x_nn[i] - x[i]);
            }
            Sample::new(features, minority_label)
        })
        .collect();

    let mut out = Vec::with_capacity(samples.len() + needed);
    out.extend_from_slice(samples);
    out.extend(synthetic);
    Ok(out)
}
