use ndarray::{Array1, Array2};

use super::backprop::flush_subnormal;
use super::{Gradients, Mlp, NeuralNetError, TrainConfig};

/// First and second moment accumulators mirroring the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m_weights: Vec<Array2<f64>>,
    pub v_weights: Vec<Array2<f64>>,
    pub m_biases: Vec<Array1<f64>>,
    pub v_biases: Vec<Array1<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(mlp: &Mlp) -> Self {
        let zeros_w = || -> Vec<Array2<f64>> {
            (0..mlp.num_layers())
                .map(|l| Array2::zeros(mlp.weights(l).dim()))
                .collect()
        };
        let zeros_b = || -> Vec<Array1<f64>> {
            (0..mlp.num_layers())
                .map(|l| Array1::zeros(mlp.biases(l).len()))
                .collect()
        };
        Self {
            m_weights: zeros_w(),
            v_weights: zeros_w(),
            m_biases: zeros_b(),
            v_biases: zeros_b(),
            t: 0,
        }
    }
}

/// Bias-corrected Adam update of one parameter block at step `t` (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) {
    let bc1 = 1.0 - beta1.powf(t as f64);
    let bc2 = 1.0 - beta2.powf(t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = flush_subnormal(beta1 * m[i] + (1.0 - beta1) * g);
        v[i] = flush_subnormal(beta2 * v[i] + (1.0 - beta2) * g * g);
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
}

fn slice_mut<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are contiguous")
}

fn slice<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
    a.as_slice().expect("parameters are contiguous")
}

/// Applies one Adam step in place and advances `state.t`.
pub fn adam_step(
    mlp: &mut Mlp,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<(), NeuralNetError> {
    let layers = mlp.num_layers();
    if grads.weights.len() != layers || state.m_weights.len() != layers {
        return Err(NeuralNetError::ShapeMismatch(format!(
            "optimizer expects {layers} layers, gradients have {}",
            grads.weights.len()
        )));
    }
    for l in 0..layers {
        if grads.weights[l].dim() != mlp.weights(l).dim() || grads.biases[l].len() != mlp.biases(l).len() {
            return Err(NeuralNetError::ShapeMismatch(format!("gradient shape differs at layer {l}")));
        }
    }
    state.t += 1;
    let t = state.t;
    for (l, (w, b)) in mlp.params_mut().enumerate() {
        adam_update(
            slice_mut(w),
            slice(&grads.weights[l]),
            slice_mut(&mut state.m_weights[l]),
            slice_mut(&mut state.v_weights[l]),
            t,
            cfg.learning_rate,
            cfg.beta1,
            cfg.beta2,
            cfg.epsilon_adam,
        );
        adam_update(
            slice_mut(b),
            slice(&grads.biases[l]),
            slice_mut(&mut state.m_biases[l]),
            slice_mut(&mut state.v_biases[l]),
            t,
            cfg.learning_rate,
            cfg.beta1,
            cfg.beta2,
            cfg.epsilon_adam,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Scaler;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = TrainConfig::default();
        let (mut theta, mut m, mut v) = ([0.7], [0.0], [0.0]);
        adam_update(&mut theta, &[1.0], &mut m, &mut v, 1, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon_adam);
        let delta = theta[0] - 0.7;
        assert!((delta + 0.0003).abs() < 1e-11, "{delta}");
        assert!(delta < 0.0);
    }

    #[test]
    fn first_step_follows_negative_gradient_sign() {
        let grads = [3.0, -0.02, 1e-3, -50.0];
        let mut theta = [0.0; 4];
        let (mut m, mut v) = ([0.0; 4], [0.0; 4]);
        adam_update(&mut theta, &grads, &mut m, &mut v, 1, 0.01, 0.87, 0.999, 1e-8);
        for (t, g) in theta.iter().zip(grads) {
            assert_eq!(t.signum(), -g.signum());
            assert!((t.abs() - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut mlp = Mlp::new(&[5, 6, 2], Scaler::identity(), 1).unwrap();
        let before = mlp.clone();
        let mut state = AdamState::new(&mlp);
        let grads = super::super::Gradients::zeros_like(&mlp);
        adam_step(&mut mlp, &grads, &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(mlp, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut mlp = Mlp::new(&[5, 6, 2], Scaler::identity(), 1).unwrap();
        let other = Mlp::new(&[5, 3, 2], Scaler::identity(), 1).unwrap();
        let mut state = AdamState::new(&mlp);
        let grads = super::super::Gradients::zeros_like(&other);
        assert!(matches!(
            adam_step(&mut mlp, &grads, &mut state, &TrainConfig::default()),
            Err(NeuralNetError::ShapeMismatch(_))
        ));
    }
}
