use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backprop::batch_matrix;
use super::{adam_step, loss_and_gradients, weighted_ce_loss, AdamState, Mlp, NeuralNetError, TrainConfig};
use crate::dataset::{Sample, SplitDataset};
use crate::evalbench::{confusion, f1_accuracy};
use crate::flight::Label;

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,val_loss,val_f1";

/// Rows scored per matrix product when evaluating the validation split.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned, if any training happened.
    pub best_epoch: Option<usize>,
}

pub fn write_history_csv<W: Write>(history: &TrainHistory, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{HISTORY_CSV_HEADER}")?;
    for r in &history.epochs {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_f1)?;
    }
    out.flush()
}

fn predictions_and_loss(mlp: &Mlp, samples: &[Sample], cfg: &TrainConfig) -> (Vec<Label>, f64) {
    let mut predictions = Vec::with_capacity(samples.len());
    let mut total = 0.0;
    for chunk in samples.chunks(EVAL_CHUNK) {
        let probabilities: Array2<f64> = mlp.probabilities_scaled(batch_matrix(chunk).view());
        for (i, s) in chunk.iter().enumerate() {
            let p = [probabilities[[i, 0]], probabilities[[i, 1]]];
            total += weighted_ce_loss(&p, s.label, &cfg.class_weights);
            predictions.push(Label::from(p[1] > p[0]));
        }
    }
    (predictions, total / samples.len() as f64)
}

/// Mini-batch Adam on `data.train`, scoring `data.validation` after each epoch.
///
/// Both splits must already be in network input space (scaled with the
/// model's scaler). Runs `epochs × ⌈N / batch_size⌉` optimizer steps with a
/// reshuffle per epoch drawn from `cfg.seed`, and returns the parameters from
/// the epoch with the best validation F1 (earliest on ties).
pub fn train(mlp: Mlp, data: &SplitDataset, cfg: &TrainConfig) -> Result<(Mlp, TrainHistory), NeuralNetError> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(NeuralNetError::EmptySplit("training"));
    }
    if data.validation.is_empty() {
        return Err(NeuralNetError::EmptySplit("validation"));
    }
    let mut mlp = mlp;
    mlp.meta.train_config = Some(*cfg);

    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((mlp, history));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&mlp);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut batch: Vec<Sample> = Vec::with_capacity(cfg.batch_size);
    let val_labels: Vec<Label> = data.validation.iter().map(|s| s.label).collect();
    let mut best: Option<(f64, Mlp)> = None;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| data.train[i]));
            let (loss, grads) = match loss_and_gradients(&mlp, &batch, &cfg.class_weights) {
                Ok(result) => result,
                Err(NeuralNetError::GradientDiverged { .. }) => {
                    return Err(NeuralNetError::Diverged { epoch, batch: b })
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(NeuralNetError::Diverged { epoch, batch: b });
            }
            loss_sum += loss * batch.len() as f64;
            adam_step(&mut mlp, &grads, &mut adam, cfg)?;
        }

        let (predictions, val_loss) = predictions_and_loss(&mlp, &data.validation, cfg);
        let cm = confusion(&predictions, &val_labels).expect("lengths match");
        let val_f1 = f1_accuracy(&cm).f1;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / data.train.len() as f64,
            val_loss,
            val_f1,
        });
        if best.as_ref().is_none_or(|(f1, _)| val_f1 > *f1) {
            best = Some((val_f1, mlp.clone()));
            history.best_epoch = Some(epoch);
        }
    }
    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Scaler;
    use crate::neuralnet::ClassWeights;

    /// Two separable blobs in scaled space.
    fn toy_split(seed: u64) -> SplitDataset {
        let make = |n: usize, offset: f64, label: Label, phase: f64| -> Vec<Sample> {
            (0..n)
                .map(|i| {
                    let a = i as f64 * 0.37 + phase;
                    Sample::new(
                        [offset + 0.3 * a.sin(), offset - 0.2 * a.cos(), 0.1 * (2.0 * a).sin(), 0.0, offset],
                        label,
                    )
                })
                .collect()
        };
        let mut train = make(40, -1.0, Label::Closed, 0.0);
        train.extend(make(40, 1.0, Label::Open, 0.5));
        let mut validation = make(10, -1.0, Label::Closed, 7.0);
        validation.extend(make(10, 1.0, Label::Open, 9.0));
        SplitDataset {
            train,
            validation,
            test: Vec::new(),
            seed,
        }
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            learning_rate: 0.01,
            class_weights: ClassWeights::UNIFORM,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_separable_blobs() {
        let mlp = Mlp::new(&[5, 16, 8, 2], Scaler::identity(), 1).unwrap();
        let (trained, history) = train(mlp, &toy_split(0), &small_config()).unwrap();
        assert_eq!(history.epochs.len(), 30);
        let best = history.best_epoch.unwrap();
        assert_eq!(history.epochs[best - 1].val_f1, 1.0);
        assert!(history.epochs.last().unwrap().train_loss < history.epochs[0].train_loss);
        assert_eq!(trained.meta.train_config, Some(small_config()));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mlp = Mlp::new(&[5, 8, 2], Scaler::identity(), 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..small_config()
        };
        let (trained, _) = train(mlp.clone(), &toy_split(0), &cfg).unwrap();
        for l in 0..mlp.num_layers() {
            assert_eq!(trained.weights(l), mlp.weights(l));
            assert_eq!(trained.biases(l), mlp.biases(l));
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let mlp = Mlp::new(&[5, 8, 2], Scaler::identity(), 2).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..small_config()
        };
        let (trained, history) = train(mlp.clone(), &toy_split(0), &cfg).unwrap();
        assert!(history.epochs.is_empty());
        assert_eq!(history.best_epoch, None);
        assert_eq!(trained.fingerprint(), mlp.fingerprint());
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mlp = Mlp::new(&[5, 12, 6, 2], Scaler::identity(), 9).unwrap();
            train(mlp, &toy_split(0), &TrainConfig { epochs: 5, ..small_config() }).unwrap()
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(ha, hb);
    }

    #[test]
    fn divergence_is_located() {
        let mut mlp = Mlp::new(&[5, 8, 2], Scaler::identity(), 2).unwrap();
        {
            let (mut w, _) = mlp.layer_mut(1);
            w.fill(f64::MAX);
        }
        match train(mlp, &toy_split(0), &small_config()) {
            Err(NeuralNetError::Diverged { epoch, batch }) => assert_eq!((epoch, batch), (1, 0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_splits_rejected() {
        let mlp = Mlp::new(&[5, 8, 2], Scaler::identity(), 2).unwrap();
        let mut data = toy_split(0);
        data.validation.clear();
        assert!(matches!(train(mlp.clone(), &data, &small_config()), Err(NeuralNetError::EmptySplit(_))));
        data.train.clear();
        assert!(matches!(train(mlp, &data, &small_config()), Err(NeuralNetError::EmptySplit(_))));
    }

    #[test]
    fn history_csv_layout() {
        let history = TrainHistory {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_loss: 0.25,
                val_f1: 0.75,
            }],
            best_epoch: Some(1),
        };
        let mut buf = Vec::new();
        write_history_csv(&history, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_loss,val_loss,val_f1\n1,0.5,0.25,0.75\n");
    }
}
