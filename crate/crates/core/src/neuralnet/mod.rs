//! Dense ReLU network with a softmax head, trained from scratch.
//!
//! Forward and backward passes operate on row-major batches (`batch × features`)
//! so that every layer is a single matrix product. All arithmetic is `f64`.

mod adam;
mod backprop;
pub mod gradcheck;
mod loss;
mod model_file;
mod network;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flight::Label;

pub use adam::{adam_step, adam_update, AdamState};
pub use backprop::{backward, batch_loss, loss_and_gradients, Gradients};
pub use loss::{weighted_ce_loss, LOG_CLAMP};
pub use model_file::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION};
pub use network::{init_mlp, softmax, Mlp, ModelMeta, OUTPUT_CLASSES, DEFAULT_LAYER_DIMS};
pub use train::{train, write_history_csv, EpochRecord, TrainHistory, HISTORY_CSV_HEADER};

/// Per-class multipliers on the cross-entropy term of the sample's true class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub closed: f64,
    pub open: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self {
            closed: 0.90,
            open: 0.05,
        }
    }
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights {
        closed: 1.0,
        open: 1.0,
    };

    pub fn for_label(&self, label: Label) -> f64 {
        match label {
            Label::Closed => self.closed,
            Label::Open => self.open,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_adam: f64,
    pub class_weights: ClassWeights,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.0003,
            beta1: 0.87,
            beta2: 0.999,
            epsilon_adam: 1e-8,
            class_weights: ClassWeights::default(),
            seed: 0,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralNetError> {
        let invalid = |field: &'static str, reason: &str| {
            Err(NeuralNetError::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if self.batch_size == 0 {
            return invalid("batch_size", "must be at least 1");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return invalid("learning_rate", "must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return invalid("beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return invalid("beta2", "must lie in [0, 1)");
        }
        if !(self.epsilon_adam > 0.0) {
            return invalid("epsilon_adam", "must be positive");
        }
        if !(self.class_weights.closed > 0.0) || !self.class_weights.closed.is_finite() {
            return invalid("class_weights.closed", "must be positive");
        }
        if !(self.class_weights.open > 0.0) || !self.class_weights.open.is_finite() {
            return invalid("class_weights.open", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum NeuralNetError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training config: {field} {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite gradient in layer {layer}")]
    GradientDiverged { layer: usize },
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("corrupted model payload: {0}")]
    CorruptedPayload(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
