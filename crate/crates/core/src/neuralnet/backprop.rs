use ndarray::{Array1, Array2, Axis};

use super::network::ForwardCache;
use super::{weighted_ce_loss, ClassWeights, Mlp, NeuralNetError};
use crate::dataset::{Sample, FEATURE_COUNT};

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: (0..mlp.num_layers()).map(|l| Array2::zeros(mlp.weights(l).dim())).collect(),
            biases: (0..mlp.num_layers()).map(|l| Array1::zeros(mlp.biases(l).len())).collect(),
        }
    }
}

pub(crate) fn batch_matrix(batch: &[Sample]) -> Array2<f64> {
    Array2::from_shape_fn((batch.len(), FEATURE_COUNT), |(i, j)| batch[i].features[j])
}

fn mean_loss(probabilities: &Array2<f64>, batch: &[Sample], weights: &ClassWeights) -> f64 {
    let total: f64 = batch
        .iter()
        .enumerate()
        .map(|(i, s)| weighted_ce_loss(&[probabilities[[i, 0]], probabilities[[i, 1]]], s.label, weights))
        .sum();
    total / batch.len() as f64
}

/// Zeroes values below the normal range. A confident network produces
/// wrong-class probabilities near 1e-300; left alone they turn every
/// backward matrix product into slow subnormal arithmetic.
#[inline]
pub(crate) fn flush_subnormal(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

/// Mean weighted cross-entropy of a batch whose features are already in
/// network input space (scaled).
pub fn batch_loss(mlp: &Mlp, batch: &[Sample], weights: &ClassWeights) -> Result<f64, NeuralNetError> {
    if batch.is_empty() {
        return Err(NeuralNetError::EmptyBatch);
    }
    let probabilities = mlp.probabilities_scaled(batch_matrix(batch).view());
    Ok(mean_loss(&probabilities, batch, weights))
}

/// Mean batch loss and its exact gradient. Features must already be scaled.
///
/// Softmax and cross-entropy are fused: the output pre-activation gradient is
/// `w_label (p − onehot) / batch_size`.
pub fn loss_and_gradients(
    mlp: &Mlp,
    batch: &[Sample],
    weights: &ClassWeights,
) -> Result<(f64, Gradients), NeuralNetError> {
    if batch.is_empty() {
        return Err(NeuralNetError::EmptyBatch);
    }
    let ForwardCache {
        activations,
        pre,
        probabilities,
    } = mlp.forward_batch(batch_matrix(batch).view());
    let loss = mean_loss(&probabilities, batch, weights);

    let n = batch.len() as f64;
    let mut delta = probabilities;
    for (i, s) in batch.iter().enumerate() {
        delta[[i, s.label.index()]] -= 1.0;
        let scale = weights.for_label(s.label) / n;
        delta.row_mut(i).mapv_inplace(|d| flush_subnormal(d * scale));
    }

    let layers = mlp.num_layers();
    let mut grad_w = Vec::with_capacity(layers);
    let mut grad_b = Vec::with_capacity(layers);
    for l in (0..layers).rev() {
        let gw = delta.t().dot(&activations[l]);
        let gb = delta.sum_axis(Axis(0));
        if gw.iter().chain(gb.iter()).any(|v| !v.is_finite()) {
            return Err(NeuralNetError::GradientDiverged { layer: l });
        }
        if l > 0 {
            let mut upstream = delta.dot(mlp.weights(l));
            ndarray::Zip::from(&mut upstream)
                .and(&pre[l - 1])
                .for_each(|d, &z| {
                    *d = if z <= 0.0 { 0.0 } else { flush_subnormal(*d) };
                });
            delta = upstream;
        }
        grad_w.push(gw);
        grad_b.push(gb);
    }
    grad_w.reverse();
    grad_b.reverse();
    Ok((
        loss,
        Gradients {
            weights: grad_w,
            biases: grad_b,
        },
    ))
}

/// Gradient of the mean weighted cross-entropy over a scaled batch.
pub fn backward(mlp: &Mlp, batch: &[Sample], weights: &ClassWeights) -> Result<Gradients, NeuralNetError> {
    loss_and_gradients(mlp, batch, weights).map(|(_, g)| g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Scaler;
    use crate::flight::Label;

    fn zeroed(dims: &[usize]) -> Mlp {
        let mut mlp = Mlp::new(dims, Scaler::identity(), 0).unwrap();
        for l in 0..mlp.num_layers() {
            let (mut w, mut b) = mlp.layer_mut(l);
            w.fill(0.0);
            b.fill(0.0);
        }
        mlp
    }

    #[test]
    fn balanced_batch_on_zero_network_has_zero_output_bias_gradient() {
        let mlp = zeroed(&[5, 8, 4, 2]);
        let batch = vec![
            Sample::new([0.1, 0.2, 0.3, 0.4, 0.5], Label::Open),
            Sample::new([-1.0, 2.0, 0.0, 1.0, 3.0], Label::Closed),
            Sample::new([2.0, 2.0, 1.0, -1.0, 0.0], Label::Open),
            Sample::new([0.0, 0.0, 0.5, 0.5, 0.5], Label::Closed),
        ];
        let g = backward(&mlp, &batch, &ClassWeights::UNIFORM).unwrap();
        assert!(g.biases[2].iter().all(|&v| v == 0.0), "{:?}", g.biases[2]);
    }

    #[test]
    fn confident_correct_sample_has_zero_gradient() {
        // one hidden unit saturating the Open logit so p_open == 1.0 in f64
        let mut mlp = zeroed(&[5, 2]);
        {
            let (_, mut b) = mlp.layer_mut(0);
            b[1] = 800.0;
        }
        let batch = vec![Sample::new([0.2, -0.1, 0.0, 0.3, 0.4], Label::Open)];
        let (loss, g) = loss_and_gradients(&mlp, &batch, &ClassWeights::default()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(g.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mlp = zeroed(&[5, 2]);
        assert!(matches!(backward(&mlp, &[], &ClassWeights::UNIFORM), Err(NeuralNetError::EmptyBatch)));
        assert!(matches!(batch_loss(&mlp, &[], &ClassWeights::UNIFORM), Err(NeuralNetError::EmptyBatch)));
    }

    #[test]
    fn exploding_parameters_are_reported() {
        let mut mlp = Mlp::new(&[5, 4, 2], Scaler::identity(), 1).unwrap();
        {
            let (mut w, _) = mlp.layer_mut(1);
            w.fill(f64::MAX);
        }
        let batch = vec![Sample::new([1.0; 5], Label::Closed), Sample::new([-1.0; 5], Label::Open)];
        let result = backward(&mlp, &batch, &ClassWeights::UNIFORM);
        assert!(matches!(result, Err(NeuralNetError::GradientDiverged { .. })), "{result:?}");
    }

    #[test]
    fn gradient_shapes_mirror_parameters() {
        let mlp = Mlp::new(&[5, 7, 3, 2], Scaler::identity(), 2).unwrap();
        let batch = vec![Sample::new([0.5; 5], Label::Open)];
        let g = backward(&mlp, &batch, &ClassWeights::default()).unwrap();
        for l in 0..mlp.num_layers() {
            assert_eq!(g.weights[l].dim(), mlp.weights(l).dim());
            assert_eq!(g.biases[l].len(), mlp.biases(l).len());
        }
    }
}
