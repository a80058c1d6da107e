use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::flight::{coast_dynamics, predict_apogee_with, FlightState, RocketModel};
use crate::integrator::CountingSystem;
use crate::neuralnet::Mlp;

pub const WARMUP_ITERATIONS: usize = 10;
pub const MIN_REPETITIONS: usize = 30;

/// Arithmetic in one coast-dynamics evaluation: density (exp, multiply,
/// negate-divide), drag product (four multiplies), gravity sum.
pub const FLOPS_PER_RHS_EVAL: u64 = 9;
/// Stage offsets (3 × 2 per component) and the weighted combination (7 per
/// component) of an RK4 step on the two-component coast state.
pub const FLOPS_PER_RK4_COMBINE: u64 = 26;

/// Multiply-accumulates of one dense forward pass through `dims`.
pub fn count_macs(dims: &[usize]) -> u64 {
    dims.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
}

pub fn count_nn_macs(mlp: &Mlp) -> u64 {
    count_macs(mlp.layer_dims())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCallCount {
    pub steps: u64,
    pub rhs_evals: u64,
    pub flops_estimate: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub median_ns: u64,
    pub p95_ns: u64,
    pub mean_ns: f64,
}

impl TimingStats {
    fn from_samples(mut ns: Vec<u64>) -> Self {
        ns.sort_unstable();
        let n = ns.len();
        let median = if n % 2 == 1 {
            ns[n / 2]
        } else {
            (ns[n / 2 - 1] + ns[n / 2]) / 2
        };
        let p95_rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            median_ns: median,
            p95_ns: ns[p95_rank - 1],
            mean_ns: ns.iter().sum::<u64>() as f64 / n as f64,
        }
    }
}

/// Wall-clock per decision; varies run to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub nn: TimingStats,
    pub oracle: TimingStats,
    pub warmup_iterations: usize,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub layer_dims: Vec<usize>,
    pub nn_macs: u64,
    /// Two flops per MAC plus one per bias add and activation.
    pub nn_flops_estimate: u64,
    pub oracle_h: f64,
    pub n_states: usize,
    /// One entry per benchmarked state.
    pub oracle_calls: Vec<OracleCallCount>,
    pub steps_per_oracle_call: Vec<u64>,
    pub rk4_rhs_evals: Vec<u64>,
    pub rk4_flops_estimate: Vec<u64>,
    pub mean_steps_per_oracle_call: f64,
    pub mean_rk4_flops_estimate: f64,
    pub nondeterministic: TimingSummary,
}

fn per_decision_timings<F: FnMut() -> Result<(), EvalError>>(
    mut run_all: F,
    n_states: usize,
    repetitions: usize,
) -> Result<Vec<u64>, EvalError> {
    for _ in 0..WARMUP_ITERATIONS {
        run_all()?;
    }
    let mut out = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        run_all()?;
        out.push(start.elapsed().as_nanos() as u64 / n_states as u64);
    }
    Ok(out)
}

/// Times surrogate inference against the RK4 apogee oracle on the same states
/// and records operation counts. Counts are deterministic; timings live in
/// `nondeterministic`.
pub fn benchmark(
    mlp: &Mlp,
    model: &RocketModel,
    states: &[FlightState],
    h: f64,
    repetitions: usize,
) -> Result<BenchReport, EvalError> {
    if repetitions < MIN_REPETITIONS {
        return Err(EvalError::TooFewRepetitions {
            needed: MIN_REPETITIONS,
            got: repetitions,
        });
    }
    if states.is_empty() {
        return Err(EvalError::NoStates);
    }
    let dynamics = coast_dynamics(model, false)?;
    let counted = CountingSystem::new(dynamics);
    let mut calls = Vec::with_capacity(states.len());
    for s in states {
        counted.reset();
        let prediction = predict_apogee_with(&counted, s, h)?;
        let rhs_evals = counted.evaluations();
        calls.push(OracleCallCount {
            steps: prediction.steps,
            rhs_evals,
            flops_estimate: rhs_evals * FLOPS_PER_RHS_EVAL + prediction.steps * FLOPS_PER_RK4_COMBINE,
        });
    }

    let features: Vec<[f64; 5]> = states.iter().map(FlightState::features).collect();
    let nn_times = per_decision_timings(
        || {
            for f in &features {
                black_box(mlp.predict(black_box(f))?);
            }
            Ok(())
        },
        states.len(),
        repetitions,
    )?;
    let oracle_times = per_decision_timings(
        || {
            for s in states {
                black_box(predict_apogee_with(&dynamics, black_box(s), h)?);
            }
            Ok(())
        },
        states.len(),
        repetitions,
    )?;
    let timing = TimingSummary {
        nn: TimingStats::from_samples(nn_times),
        oracle: TimingStats::from_samples(oracle_times),
        warmup_iterations: WARMUP_ITERATIONS,
        repetitions,
    };
    if timing.nn.median_ns == 0 && timing.oracle.median_ns == 0 {
        return Err(EvalError::TimerResolution);
    }

    let nn_macs = count_nn_macs(mlp);
    let dims = mlp.layer_dims();
    let activations: u64 = dims[1..].iter().map(|&d| d as u64).sum();
    let n = calls.len() as f64;
    Ok(BenchReport {
        layer_dims: dims.to_vec(),
        nn_macs,
        nn_flops_estimate: 2 * nn_macs + 2 * activations,
        oracle_h: h,
        n_states: states.len(),
        steps_per_oracle_call: calls.iter().map(|c| c.steps).collect(),
        rk4_rhs_evals: calls.iter().map(|c| c.rhs_evals).collect(),
        rk4_flops_estimate: calls.iter().map(|c| c.flops_estimate).collect(),
        mean_steps_per_oracle_call: calls.iter().map(|c| c.steps as f64).sum::<f64>() / n,
        mean_rk4_flops_estimate: calls.iter().map(|c| c.flops_estimate as f64).sum::<f64>() / n,
        oracle_calls: calls,
        nondeterministic: timing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Scaler;
    use crate::neuralnet::DEFAULT_LAYER_DIMS;

    #[test]
    fn mac_counts() {
        assert_eq!(count_macs(&DEFAULT_LAYER_DIMS), 2_806_440);
        assert_eq!(count_macs(&[5, 2]), 10);
        assert_eq!(count_macs(&[5, 8, 2]), 56);
    }

    #[test]
    fn percentile_rules() {
        let s = TimingStats::from_samples((1..=100).collect());
        assert_eq!(s.median_ns, 50);
        assert_eq!(s.p95_ns, 95);
        let s = TimingStats::from_samples(vec![7, 1, 3]);
        assert_eq!((s.median_ns, s.p95_ns), (3, 7));
    }

    fn states(model: &RocketModel) -> Vec<FlightState> {
        vec![
            FlightState::coasting(model, 800.0, 180.0),
            FlightState::coasting(model, 1200.0, 260.0),
            FlightState::coasting(model, 3000.0, 40.0),
        ]
    }

    #[test]
    fn counts_follow_stage_rule_and_step_size() {
        let model = RocketModel::default();
        let mlp = Mlp::new(&[5, 8, 2], Scaler::identity(), 0).unwrap();
        let coarse = benchmark(&mlp, &model, &states(&model), 0.02, 30).unwrap();
        let fine = benchmark(&mlp, &model, &states(&model), 0.01, 30).unwrap();
        assert_eq!(coarse.nn_macs, 56);
        for r in [&coarse, &fine] {
            for c in &r.oracle_calls {
                assert_eq!(c.rhs_evals, 4 * c.steps);
            }
        }
        for (c, f) in coarse.steps_per_oracle_call.iter().zip(&fine.steps_per_oracle_call) {
            assert!((*f as i64 - 2 * *c as i64).abs() <= 1, "{c} vs {f}");
        }
        let again = benchmark(&mlp, &model, &states(&model), 0.02, 30).unwrap();
        assert_eq!(again.oracle_calls, coarse.oracle_calls);
    }

    #[test]
    fn guards() {
        let model = RocketModel::default();
        let mlp = Mlp::new(&[5, 2], Scaler::identity(), 0).unwrap();
        assert!(matches!(
            benchmark(&mlp, &model, &states(&model), 0.01, 5),
            Err(EvalError::TooFewRepetitions { .. })
        ));
        assert!(matches!(benchmark(&mlp, &model, &[], 0.01, 30), Err(EvalError::NoStates)));
    }
}
