use ndarray::{Array1, Array2, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{NeuralNetError, TrainConfig};
use crate::dataset::{Scaler, FEATURE_COUNT};
use crate::flight::Label;

/// 5 sensor inputs, ten hidden ReLU layers, 2-way softmax.
pub const DEFAULT_LAYER_DIMS: [usize; 12] = [5, 2048, 1024, 512, 256, 128, 64, 32, 16, 8, 4, 2];

pub const OUTPUT_CLASSES: usize = 2;

/// Provenance carried into the model file.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub train_config: Option<TrainConfig>,
}

/// Fully connected network. Layer `l` maps `layer_dims[l]` inputs to
/// `layer_dims[l + 1]` outputs through an `out × in` weight matrix; hidden
/// layers use ReLU and the last one feeds a softmax. Inputs are raw sensor
/// features; the embedded [`Scaler`] standardizes them first.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    scaler: Scaler,
    pub meta: ModelMeta,
}

pub(crate) struct ForwardCache {
    /// `activations[0]` is the input batch, `activations[l]` the ReLU output of layer `l - 1`.
    pub activations: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pub pre: Vec<Array2<f64>>,
    pub probabilities: Array2<f64>,
}

fn validate_dims(dims: &[usize]) -> Result<(), NeuralNetError> {
    if dims.len() < 2 {
        return Err(NeuralNetError::InvalidArchitecture("need at least input and output layers".into()));
    }
    if dims[0] != FEATURE_COUNT {
        return Err(NeuralNetError::InvalidArchitecture(format!(
            "input width must be {FEATURE_COUNT}, got {}",
            dims[0]
        )));
    }
    if dims[dims.len() - 1] != OUTPUT_CLASSES {
        return Err(NeuralNetError::InvalidArchitecture(format!(
            "output width must be {OUTPUT_CLASSES}, got {}",
            dims[dims.len() - 1]
        )));
    }
    if dims.contains(&0) {
        return Err(NeuralNetError::InvalidArchitecture("layer widths must be positive".into()));
    }
    Ok(())
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    logits
}

impl Mlp {
    /// He-normal weights (`N(0, 2 / fan_in)`), zero biases, drawn in layer
    /// order from a ChaCha stream seeded with `seed`.
    pub fn new(layer_dims: &[usize], scaler: Scaler, seed: u64) -> Result<Self, NeuralNetError> {
        validate_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for pair in layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let values: Vec<f64> = (0..fan_in * fan_out).map(|_| normal.sample(&mut rng)).collect();
            weights.push(Array2::from_shape_vec((fan_out, fan_in), values).expect("shape matches"));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            scaler,
            meta: ModelMeta { seed, train_config: None },
        })
    }

    pub(crate) fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        scaler: Scaler,
        meta: ModelMeta,
    ) -> Result<Self, NeuralNetError> {
        validate_dims(&layer_dims).map_err(|e| NeuralNetError::ShapeMismatch(e.to_string()))?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(NeuralNetError::ShapeMismatch(format!(
                "{} layers declared, {} weight matrices and {} bias vectors present",
                layers,
                weights.len(),
                biases.len()
            )));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let expected = (layer_dims[l + 1], layer_dims[l]);
            if w.dim() != expected || b.len() != expected.0 {
                return Err(NeuralNetError::ShapeMismatch(format!(
                    "layer {l}: expected {}x{} weights and {} biases, got {}x{} and {}",
                    expected.0,
                    expected.1,
                    expected.0,
                    w.nrows(),
                    w.ncols(),
                    b.len()
                )));
            }
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
            scaler,
            meta,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &Array2<f64> {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &Array1<f64> {
        &self.biases[layer]
    }

    /// Mutable views of one layer's parameters; shapes cannot change.
    pub fn layer_mut(&mut self, layer: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
        (self.weights[layer].view_mut(), self.biases[layer].view_mut())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = (&mut Array2<f64>, &mut Array1<f64>)> {
        self.weights.iter_mut().zip(self.biases.iter_mut())
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn set_scaler(&mut self, scaler: Scaler) {
        self.scaler = scaler;
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Pre-softmax outputs for a batch already in network input space.
    pub(crate) fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut current = inputs.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = current.dot(&w.t()) + b;
            let next = if l < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            activations.push(current);
            pre.push(z);
            current = next;
        }
        let probabilities = softmax_rows(current);
        ForwardCache {
            activations,
            pre,
            probabilities,
        }
    }

    /// Class probabilities for a batch already in network input space.
    pub(crate) fn probabilities_scaled(&self, inputs: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut current = inputs.to_owned();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = current.dot(&w.t()) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            current = z;
        }
        softmax_rows(current)
    }

    fn check_features(features: &[f64; FEATURE_COUNT]) -> Result<(), NeuralNetError> {
        if let Some(i) = features.iter().position(|f| !f.is_finite()) {
            return Err(NeuralNetError::InvalidInput(format!("feature {i} is not finite")));
        }
        Ok(())
    }

    /// Output-layer pre-activations for raw sensor features.
    pub fn logits(&self, features: &[f64; FEATURE_COUNT]) -> Result<Vec<f64>, NeuralNetError> {
        Self::check_features(features)?;
        let mut current = Array1::from(self.scaler.transform(features).to_vec());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.dot(&current) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            current = z;
        }
        Ok(current.to_vec())
    }

    /// `[p_closed, p_open]` for raw sensor features.
    pub fn forward(&self, features: &[f64; FEATURE_COUNT]) -> Result<[f64; 2], NeuralNetError> {
        let p = softmax(&self.logits(features)?);
        Ok([p[0], p[1]])
    }

    /// Argmax of [`Mlp::forward`]; an exact tie resolves to `Closed`.
    pub fn predict(&self, features: &[f64; FEATURE_COUNT]) -> Result<Label, NeuralNetError> {
        let p = self.forward(features)?;
        Ok(Label::from(p[1] > p[0]))
    }

    /// SHA-256 over architecture, scaler and parameter bit patterns.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for d in &self.layer_dims {
            hasher.update((*d as u64).to_le_bytes());
        }
        for v in self.scaler.mean.iter().chain(&self.scaler.std) {
            hasher.update(v.to_bits().to_le_bytes());
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for v in w.iter().chain(b.iter()) {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// The full-width network with an identity scaler.
pub fn init_mlp(seed: u64) -> Mlp {
    Mlp::new(&DEFAULT_LAYER_DIMS, Scaler::identity(), seed).expect("full-width architecture is valid")
}
