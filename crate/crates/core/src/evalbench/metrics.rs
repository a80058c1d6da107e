use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::flight::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Which ratios were 0/0 and therefore reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DegenerateFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub accuracy: bool,
}

impl DegenerateFlags {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1 || self.accuracy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub degenerate: DegenerateFlags,
}

pub fn confusion(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (p, l) in predictions.iter().zip(labels) {
        match (p, l) {
            (Label::Open, Label::Open) => cm.tp += 1,
            (Label::Open, Label::Closed) => cm.fp += 1,
            (Label::Closed, Label::Closed) => cm.tn += 1,
            (Label::Closed, Label::Open) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Precision, recall, F1 and accuracy; any 0/0 is reported as 0 and flagged.
pub fn f1_accuracy(cm: &ConfusionMatrix) -> Metrics {
    let (precision, dp) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, dr) = ratio(cm.tp, cm.tp + cm.fn_);
    let (accuracy, da) = ratio(cm.tp + cm.tn, cm.total());
    let (f1, df) = if precision + recall > 0.0 {
        (2.0 * precision * recall / (precision + recall), false)
    } else {
        (0.0, true)
    };
    Metrics {
        precision,
        recall,
        f1,
        accuracy,
        degenerate: DegenerateFlags {
            precision: dp,
            recall: dr,
            f1: df,
            accuracy: da,
        },
    }
}
