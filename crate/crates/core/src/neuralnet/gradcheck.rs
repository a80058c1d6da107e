//! Central-difference verification of the backpropagated gradients.
//!
//! The numerical side only ever calls the forward pass, so it shares no code
//! with [`backward`](super::backward) beyond the network evaluation itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{backward, batch_loss, ClassWeights, Mlp, NeuralNetError};
use crate::dataset::{Sample, Scaler, FEATURE_COUNT};
use crate::flight::Label;

pub const DEFAULT_GRADCHECK_DIMS: [usize; 4] = [5, 8, 4, 2];
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Gradients are compared relative to `max(|analytic|, |numeric|, floor)`.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstParameter {
    pub layer: usize,
    pub kind: ParamKind,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub seed: u64,
    pub parameters_checked: usize,
    pub max_relative_error: f64,
    pub worst: Option<WorstParameter>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / scale
}

/// Random standard-normal features with random labels, already in network space.
pub fn random_batch(seed: u64, size: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..size)
        .map(|_| {
            let features: [f64; FEATURE_COUNT] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            Sample::new(features, Label::from(rng.random::<bool>()))
        })
        .collect()
}

/// Compares every parameter's backprop gradient with a central difference.
pub fn check_gradients(
    mlp: &Mlp,
    batch: &[Sample],
    weights: &ClassWeights,
    step: f64,
) -> Result<GradCheckReport, NeuralNetError> {
    let analytic = backward(mlp, batch, weights)?;
    let mut probe = mlp.clone();
    let mut report = GradCheckReport {
        seed: mlp.meta.seed,
        parameters_checked: 0,
        max_relative_error: 0.0,
        worst: None,
    };

    for layer in 0..mlp.num_layers() {
        for kind in [ParamKind::Weight, ParamKind::Bias] {
            let count = match kind {
                ParamKind::Weight => mlp.weights(layer).len(),
                ParamKind::Bias => mlp.biases(layer).len(),
            };
            for index in 0..count {
                let original = param(&mut probe, layer, kind, index, None);
                param(&mut probe, layer, kind, index, Some(original + step));
                let plus = batch_loss(&probe, batch, weights)?;
                param(&mut probe, layer, kind, index, Some(original - step));
                let minus = batch_loss(&probe, batch, weights)?;
                param(&mut probe, layer, kind, index, Some(original));

                let numeric = (plus - minus) / (2.0 * step);
                let exact = match kind {
                    ParamKind::Weight => analytic.weights[layer].as_slice().expect("contiguous")[index],
                    ParamKind::Bias => analytic.biases[layer][index],
                };
                let err = relative_error(exact, numeric);
                report.parameters_checked += 1;
                if err > report.max_relative_error || report.worst.is_none() {
                    report.max_relative_error = report.max_relative_error.max(err);
                    report.worst = Some(WorstParameter {
                        layer,
                        kind,
                        index,
                        analytic: exact,
                        numeric,
                        relative_error: err,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Reads a parameter, optionally overwriting it first.
fn param(mlp: &mut Mlp, layer: usize, kind: ParamKind, index: usize, set: Option<f64>) -> f64 {
    let (mut w, mut b) = mlp.layer_mut(layer);
    let slot = match kind {
        ParamKind::Weight => &mut w.as_slice_mut().expect("contiguous")[index],
        ParamKind::Bias => &mut b[index],
    };
    if let Some(v) = set {
        *slot = v;
    }
    *slot
}

/// The standard diagnostic: a fresh network per seed with the default class
/// weights and a random batch.
pub fn run_suite(
    dims: &[usize],
    seeds: impl IntoIterator<Item = u64>,
    batch_size: usize,
) -> Result<Vec<GradCheckReport>, NeuralNetError> {
    seeds
        .into_iter()
        .map(|seed| {
            let mut mlp = Mlp::new(dims, Scaler::identity(), seed)?;
            // non-zero biases so no unit sits exactly on a ReLU kink
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2);
            for l in 0..mlp.num_layers() {
                let (_, mut b) = mlp.layer_mut(l);
                b.mapv_inplace(|_| rng.random_range(-0.1..0.1));
            }
            let batch = random_batch(seed, batch_size);
            check_gradients(&mlp, &batch, &ClassWeights::default(), DEFAULT_FD_STEP)
        })
        .collect()
}
