use serde::{Deserialize, Serialize};

use super::{DatasetError, Sample, FEATURE_COUNT, FEATURE_NAMES};

/// Per-feature z-score transform `(x - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

impl Scaler {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; FEATURE_COUNT],
            std: [1.0; FEATURE_COUNT],
        }
    }

    pub fn transform(&self, features: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for i in 0..FEATURE_COUNT {
            out[i] = (features[i] - self.mean[i]) / self.std[i];
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|m| m.is_finite())
            && self.std.iter().all(|s| s.is_finite() && *s > 0.0)
    }
}

/// Fits mean and population standard deviation per feature.
///
/// Fit on the training split only. A feature whose spread is at round-off
/// level relative to its magnitude is rejected.
pub fn fit_scaler(samples: &[Sample]) -> Result<Scaler, DatasetError> {
    if samples.len() < 2 {
        return Err(DatasetError::TooFew {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mut mean = [0.0; FEATURE_COUNT];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s.features) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut std = [0.0; FEATURE_COUNT];
    for s in samples {
        for i in 0..FEATURE_COUNT {
            let d = s.features[i] - mean[i];
            std[i] += d * d;
        }
    }
    for i in 0..FEATURE_COUNT {
        std[i] = (std[i] / n).sqrt();
        if !(std[i] > 1e-12 * mean[i].abs().max(1.0)) {
            return Err(DatasetError::DegenerateFeature(FEATURE_NAMES[i]));
        }
    }
    Ok(Scaler { mean, std })
}

pub fn apply_scaler(scaler: &Scaler, samples: &[Sample]) -> Vec<Sample> {
    samples
        .iter()
        .map(|s| Sample::new(scaler.transform(&s.features), s.label))
        .collect()
}
