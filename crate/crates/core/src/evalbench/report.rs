use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{confusion, f1_accuracy, ConfusionMatrix, DegenerateFlags, EvalError};
use crate::dataset::{class_counts, fingerprint, Sample, FEATURE_COUNT};
use crate::flight::{oracle_label, FlightState, Label, RocketModel};
use crate::neuralnet::{ClassWeights, Mlp};

/// Anything that maps a raw five-feature vector to an airbrake command.
pub trait Classifier {
    fn name(&self) -> &str;
    fn classify(&self, features: &[f64; FEATURE_COUNT]) -> Result<Label, EvalError>;
    fn fingerprint(&self) -> String;
}

impl Classifier for Mlp {
    fn name(&self) -> &str {
        "mlp"
    }

    fn classify(&self, features: &[f64; FEATURE_COUNT]) -> Result<Label, EvalError> {
        Ok(self.predict(features)?)
    }

    fn fingerprint(&self) -> String {
        Mlp::fingerprint(self)
    }
}

/// Constant majority-class predictor.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysClosed;

impl Classifier for AlwaysClosed {
    fn name(&self) -> &str {
        "always-closed"
    }

    fn classify(&self, _features: &[f64; FEATURE_COUNT]) -> Result<Label, EvalError> {
        Ok(Label::Closed)
    }

    fn fingerprint(&self) -> String {
        "always-closed".into()
    }
}

/// The RK4 apogee oracle applied to the altitude and velocity features.
#[derive(Debug, Clone, Copy)]
pub struct OracleClassifier {
    pub model: RocketModel,
    pub h: f64,
}

impl Classifier for OracleClassifier {
    fn name(&self) -> &str {
        "rk4-oracle"
    }

    fn classify(&self, features: &[f64; FEATURE_COUNT]) -> Result<Label, EvalError> {
        let state = FlightState {
            t: 0.0,
            altitude: features[0],
            v_vertical: features[1],
            accel: [features[2], features[3], features[4]],
            airbrake_open: false,
        };
        Ok(oracle_label(&self.model, &state, self.h)?)
    }

    fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(&(&self.model, self.h)).expect("plain data");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRatio {
    pub closed: u64,
    pub open: u64,
    pub open_fraction: f64,
}

impl ClassRatio {
    pub fn of(samples: &[Sample]) -> Self {
        let (closed, open) = class_counts(samples);
        Self {
            closed: closed as u64,
            open: open as u64,
            open_fraction: if samples.is_empty() {
                0.0
            } else {
                open as f64 / samples.len() as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classifier: String,
    pub n_samples: u64,
    pub confusion: ConfusionMatrix,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub degenerate: DegenerateFlags,
    /// Fraction of samples where the classifier matches the RK4 oracle's
    /// decision recomputed from the features (or the stored labels when no
    /// oracle is supplied).
    pub oracle_agreement: f64,
    pub class_ratio: ClassRatio,
    /// Loss weights the model was trained with, when known.
    pub class_weights: Option<ClassWeights>,
    /// True when the loss weights favour the majority (Closed) class.
    pub weights_favour_majority: Option<bool>,
    pub dataset_fingerprint: String,
    pub model_fingerprint: String,
}

/// Scores `classifier` on `samples` against their stored labels.
pub fn evaluate_model<C: Classifier + ?Sized>(
    classifier: &C,
    samples: &[Sample],
    oracle: Option<&OracleClassifier>,
    class_weights: Option<ClassWeights>,
) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let predictions = samples
        .iter()
        .map(|s| classifier.classify(&s.features))
        .collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let cm = confusion(&predictions, &labels)?;
    let m = f1_accuracy(&cm);

    let reference: Vec<Label> = match oracle {
        Some(o) => samples
            .iter()
            .map(|s| o.classify(&s.features))
            .collect::<Result<_, _>>()?,
        None => labels.clone(),
    };
    let agree = predictions.iter().zip(&reference).filter(|(p, r)| p == r).count();

    let ratio = ClassRatio::of(samples);
    let weights_favour_majority = class_weights.map(|w| {
        let majority_is_closed = ratio.closed >= ratio.open;
        (w.closed > w.open) == majority_is_closed && w.closed != w.open
    });
    Ok(EvalReport {
        classifier: classifier.name().to_string(),
        n_samples: samples.len() as u64,
        confusion: cm,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        accuracy: m.accuracy,
        degenerate: m.degenerate,
        oracle_agreement: agree as f64 / samples.len() as f64,
        class_ratio: ratio,
        class_weights,
        weights_favour_majority,
        dataset_fingerprint: fingerprint(samples),
        model_fingerprint: classifier.fingerprint(),
    })
}
