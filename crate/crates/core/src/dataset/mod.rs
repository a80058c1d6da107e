//! Supervised dataset built from simulated flights.
//!
//! Each [`Sample`] is the five-feature sensor vector of an ascending state
//! labelled by the RK4 oracle. Preprocessing is z-score standardization fitted
//! on the training split, SMOTE on the scaled training split and a stratified
//! 7:2:1 train/validation/test partition.

mod io;
mod scaler;
mod smote;
mod split;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::flight::{oracle_label, FlightError, FlightState, Label, RocketModel, Trajectory};

pub use io::{read_csv, read_samples, write_csv, write_samples, DATASET_CSV_HEADER};
pub use scaler::{apply_scaler, fit_scaler, Scaler};
pub use smote::{smote_oversample, DEFAULT_SMOTE_K};
pub use split::{split_dataset, SplitDataset};

pub const FEATURE_COUNT: usize = 5;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "altitude_m",
    "v_vertical_mps",
    "accel_x_mps2",
    "accel_y_mps2",
    "accel_z_mps2",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: [f64; FEATURE_COUNT],
    pub label: Label,
}

impl Sample {
    pub fn new(features: [f64; FEATURE_COUNT], label: Label) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    Empty,
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("feature `{0}` has zero variance")]
    DegenerateFeature(&'static str),
    #[error("minority class has {0} samples; SMOTE needs at least 2")]
    InsufficientMinority(usize),
    #[error("neighbour count k = {k} must satisfy 1 <= k < minority count ({minority})")]
    InvalidNeighbourCount { k: usize, minority: usize },
    #[error("class {label:?} has {count} samples but none landed in the {split} split")]
    Stratification {
        label: Label,
        count: usize,
        split: &'static str,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: expected {expected} columns, found {found}")]
    Schema {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("unexpected header `{0}`")]
    Header(String),
    #[error("labelling failed: {0}")]
    Flight(#[from] FlightError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One sample per ascending trajectory state, labelled by the oracle with the
/// airbrakes treated as closed.
pub fn extract_samples(
    trajectories: &[Trajectory],
    model: &RocketModel,
    h: f64,
) -> Result<Vec<Sample>, DatasetError> {
    if trajectories.is_empty() {
        return Err(DatasetError::Empty);
    }
    let states: Vec<&FlightState> = trajectories
        .iter()
        .flat_map(|t| t.samples.iter())
        .filter(|s| s.v_vertical > 0.0)
        .collect();
    states
        .par_iter()
        .map(|s| {
            let label = oracle_label(model, s, h)?;
            Ok(Sample::new(s.features(), label))
        })
        .collect()
}

/// `(closed, open)` counts.
pub fn class_counts(samples: &[Sample]) -> (usize, usize) {
    let open = samples.iter().filter(|s| s.label.is_open()).count();
    (samples.len() - open, open)
}

/// SHA-256 over the exact bit patterns of features and labels.
pub fn fingerprint(samples: &[Sample]) -> String {
    let mut hasher = Sha256::new();
    for s in samples {
        for f in s.features {
            hasher.update(f.to_bits().to_le_bytes());
        }
        hasher.update([s.label as u8]);
    }
    hex::encode(hasher.finalize())
}
