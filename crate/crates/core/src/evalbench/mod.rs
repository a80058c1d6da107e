//! Classification metrics, model evaluation and the surrogate-vs-oracle
//! cost benchmark. The positive class is always `Open`.

mod bench;
mod metrics;
mod report;

use thiserror::Error;

use crate::flight::FlightError;
use crate::neuralnet::NeuralNetError;

pub use bench::{
    benchmark, count_macs, count_nn_macs, BenchReport, OracleCallCount, TimingStats, TimingSummary,
    FLOPS_PER_RHS_EVAL, FLOPS_PER_RK4_COMBINE, MIN_REPETITIONS, WARMUP_ITERATIONS,
};
pub use metrics::{confusion, f1_accuracy, ConfusionMatrix, DegenerateFlags, Metrics};
pub use report::{evaluate_model, AlwaysClosed, Classifier, ClassRatio, EvalReport, OracleClassifier};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("evaluation split is empty")]
    EmptySplit,
    #[error("benchmark needs at least {needed} repetitions, got {got}")]
    TooFewRepetitions { needed: usize, got: usize },
    #[error("benchmark needs at least one state")]
    NoStates,
    #[error("timer resolution too coarse: every median is zero")]
    TimerResolution,
    #[error(transparent)]
    Model(#[from] NeuralNetError),
    #[error(transparent)]
    Flight(#[from] FlightError),
}
