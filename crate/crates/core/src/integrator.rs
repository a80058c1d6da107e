//! Fixed-step classical Runge–Kutta (RK4) integration for first-order ODE systems.
//!
//! For `dy/dt = f(t, y)` one step of size `h` evaluates
//!
//! ```text
//! k1 = h f(t,       y)
//! k2 = h f(t + h/2, y + k1/2)
//! k3 = h f(t + h/2, y + k2/2)
//! k4 = h f(t + h,   y + k3)
//! y(t + h) = y + (k1 + 2 k2 + 2 k3 + k4) / 6
//! ```
//!
//! Local error is O(h⁵) and global error O(h⁴). Everything here is 64-bit.

use std::cell::Cell;
use std::fmt;

use thiserror::Error;

/// Default guard on the number of steps taken by [`integrate_until`].
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

/// Global errors below this are indistinguishable from round-off.
pub const ORDER_NOISE_FLOOR: f64 = 1e-13;

/// A first-order system `dy/dt = f(t, y)` of fixed dimension.
///
/// `rhs` must write exactly `dimension()` values into `dydt` and must be
/// deterministic.
pub trait OdeSystem {
    fn dimension(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);
}

impl<S: OdeSystem + ?Sized> OdeSystem for &S {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (**self).rhs(t, y, dydt)
    }
}

/// Adapts a closure into an [`OdeSystem`].
pub struct FnSystem<F> {
    dimension: usize,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(dimension: usize, f: F) -> Self {
        Self { dimension, f }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        (self.f)(t, y, dydt)
    }
}

/// Wraps a system and counts right-hand-side evaluations.
pub struct CountingSystem<S> {
    inner: S,
    evals: Cell<u64>,
}

impl<S: OdeSystem> CountingSystem<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            evals: Cell::new(0),
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evals.get()
    }

    pub fn reset(&self) {
        self.evals.set(0);
    }
}

impl<S: OdeSystem> OdeSystem for CountingSystem<S> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        self.evals.set(self.evals.get() + 1);
        self.inner.rhs(t, y, dydt)
    }
}

/// One of the four RK4 stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    K1,
    K2,
    K3,
    K4,
    /// The combined update itself.
    Update,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::K1 => "k1",
            Stage::K2 => "k2",
            Stage::K3 => "k3",
            Stage::K4 => "k4",
            Stage::Update => "update",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rk4Config {
    pub h: f64,
    pub max_steps: usize,
}

impl Rk4Config {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(IntegratorError::InvalidStep(self.h));
        }
        if self.max_steps == 0 {
            return Err(IntegratorError::InvalidMaxSteps);
        }
        Ok(())
    }
}

/// A state sample `(t, y)` on an integrated path.
#[derive(Debug, Clone, PartialEq)]
pub struct OdePoint {
    pub t: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IntegratorError {
    #[error("step size must be finite and strictly positive, got {0}")]
    InvalidStep(f64),
    #[error("max_steps must be positive")]
    InvalidMaxSteps,
    #[error("state has length {got}, system dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("integration diverged at t = {t}: non-finite value in stage {stage}")]
    Diverged { t: f64, stage: Stage },
    #[error("stop condition not reached within {max_steps} steps")]
    Truncated {
        max_steps: usize,
        partial: Vec<OdePoint>,
    },
    #[error("global error {error:e} is below the round-off floor; order is indeterminate")]
    IndeterminateOrder { error: f64 },
}

/// Reusable scratch space for repeated RK4 steps on one system dimension.
#[derive(Debug, Clone)]
pub struct Rk4Stepper {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Stepper {
    pub fn new(dimension: usize) -> Self {
        Self {
            k1: vec![0.0; dimension],
            k2: vec![0.0; dimension],
            k3: vec![0.0; dimension],
            k4: vec![0.0; dimension],
            tmp: vec![0.0; dimension],
        }
    }

    /// Advances `y` in place from `t` to `t + h` using exactly four rhs evaluations.
    #[allow(clippy::needless_range_loop)]
    pub fn step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &mut [f64],
        h: f64,
    ) -> Result<(), IntegratorError> {
        let n = sys.dimension();
        if y.len() != n {
            return Err(IntegratorError::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if self.k1.len() != n {
            *self = Self::new(n);
        }
        let half = 0.5 * h;

        sys.rhs(t, y, &mut self.k1);
        scale_checked(&mut self.k1, h, t, Stage::K1)?;

        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * self.k1[i];
        }
        sys.rhs(t + half, &self.tmp, &mut self.k2);
        scale_checked(&mut self.k2, h, t, Stage::K2)?;

        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * self.k2[i];
        }
        sys.rhs(t + half, &self.tmp, &mut self.k3);
        scale_checked(&mut self.k3, h, t, Stage::K3)?;

        for i in 0..n {
            self.tmp[i] = y[i] + self.k3[i];
        }
        sys.rhs(t + h, &self.tmp, &mut self.k4);
        scale_checked(&mut self.k4, h, t, Stage::K4)?;

        for i in 0..n {
            y[i] += (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]) / 6.0;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(IntegratorError::Diverged {
                t,
                stage: Stage::Update,
            });
        }
        Ok(())
    }
}

fn scale_checked(k: &mut [f64], h: f64, t: f64, stage: Stage) -> Result<(), IntegratorError> {
    for v in k.iter_mut() {
        *v *= h;
        if !v.is_finite() {
            return Err(IntegratorError::Diverged { t, stage });
        }
    }
    Ok(())
}

/// Single RK4 step returning `y(t + h)`.
pub fn rk4_step<S: OdeSystem + ?Sized>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>, IntegratorError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(IntegratorError::InvalidStep(h));
    }
    let mut next = y.to_vec();
    Rk4Stepper::new(sys.dimension()).step(sys, t, &mut next, h)?;
    Ok(next)
}

/// Integrates from `(t0, y0)` until `stop(t, y)` holds after a full step.
///
/// Times are computed as `t0 + n h` rather than accumulated. The returned path
/// starts at `(t0, y0)` and ends at the first state satisfying `stop`; the
/// initial state itself is tested too. When `max_steps` steps pass without
/// stopping, the error carries the partial path (`max_steps + 1` entries).
pub fn integrate_until<S, P>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    cfg: &Rk4Config,
    mut stop: P,
) -> Result<Vec<OdePoint>, IntegratorError>
where
    S: OdeSystem + ?Sized,
    P: FnMut(f64, &[f64]) -> bool,
{
    cfg.validate()?;
    if y0.len() != sys.dimension() {
        return Err(IntegratorError::DimensionMismatch {
            expected: sys.dimension(),
            got: y0.len(),
        });
    }
    let mut path = vec![OdePoint {
        t: t0,
        y: y0.to_vec(),
    }];
    if stop(t0, y0) {
        return Ok(path);
    }
    let mut stepper = Rk4Stepper::new(sys.dimension());
    let mut y = y0.to_vec();
    for n in 0..cfg.max_steps {
        let t = t0 + n as f64 * cfg.h;
        stepper.step(sys, t, &mut y, cfg.h)?;
        let t_next = t0 + (n + 1) as f64 * cfg.h;
        path.push(OdePoint {
            t: t_next,
            y: y.clone(),
        });
        if stop(t_next, &y) {
            return Ok(path);
        }
    }
    Err(IntegratorError::Truncated {
        max_steps: cfg.max_steps,
        partial: path,
    })
}

/// Integrates exactly `steps` steps of size `h` and returns the final state.
pub fn integrate_steps<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    h: f64,
    steps: usize,
) -> Result<Vec<f64>, IntegratorError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(IntegratorError::InvalidStep(h));
    }
    let mut stepper = Rk4Stepper::new(sys.dimension());
    let mut y = y0.to_vec();
    for n in 0..steps {
        stepper.step(sys, t0 + n as f64 * h, &mut y, h)?;
    }
    Ok(y)
}

/// Observed convergence order `log2(err(h) / err(h/2))` of the global error
/// at `t_end`, measured in the max-norm against `exact(t_end)`.
///
/// `t_end - t0` should be an integer multiple of `h_coarse`.
pub fn empirical_order<S, E>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    h_coarse: f64,
    exact: E,
) -> Result<f64, IntegratorError>
where
    S: OdeSystem + ?Sized,
    E: Fn(f64) -> Vec<f64>,
{
    if !(h_coarse > 0.0) || !h_coarse.is_finite() {
        return Err(IntegratorError::InvalidStep(h_coarse));
    }
    let steps = ((t_end - t0) / h_coarse).round() as usize;
    let reference = exact(t_end);
    let global_error = |h: f64, n: usize| -> Result<f64, IntegratorError> {
        let y = integrate_steps(sys, t0, y0, h, n)?;
        Ok(y.iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    };
    let coarse = global_error(h_coarse, steps)?;
    let fine = global_error(0.5 * h_coarse, 2 * steps)?;
    for error in [coarse, fine] {
        if error < ORDER_NOISE_FLOOR {
            return Err(IntegratorError::IndeterminateOrder { error });
        }
    }
    Ok((coarse / fine).log2())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exponential(rate: f64) -> FnSystem<impl Fn(f64, &[f64], &mut [f64])> {
        FnSystem::new(1, move |_t, y: &[f64], d: &mut [f64]| d[0] = rate * y[0])
    }

    fn oscillator() -> FnSystem<impl Fn(f64, &[f64], &mut [f64])> {
        FnSystem::new(2, |_t, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
        })
    }

    #[test]
    fn zero_derivative_is_fixed_point() {
        let sys = FnSystem::new(1, |_t, _y: &[f64], d: &mut [f64]| d[0] = 0.0);
        assert_eq!(rk4_step(&sys, 0.0, &[7.0], 0.5).unwrap(), vec![7.0]);
    }

    #[test]
    fn exponential_step_matches_hand_expansion() {
        // k1 = 0.1, k2 = 0.105, k3 = 0.10525, k4 = 0.110525
        let expected = 1.0 + (0.1 + 2.0 * 0.105 + 2.0 * 0.10525 + 0.110525) / 6.0;
        let y = rk4_step(&exponential(1.0), 0.0, &[1.0], 0.1).unwrap();
        assert!((y[0] - expected).abs() < 1e-15);
        assert!((y[0] - 1.105_170_833_333_333).abs() < 1e-12);
        let err = (y[0] - 0.1f64.exp()).abs();
        assert!((err - 8.47e-8).abs() < 1e-9, "err {err}");
    }

    #[test]
    fn oscillator_returns_after_fifty_periods() {
        let h = 0.01;
        let steps = (100.0 * std::f64::consts::PI / h).round() as usize;
        let y = integrate_steps(&oscillator(), 0.0, &[1.0, 0.0], h, steps).unwrap();
        // 100π/h is not an integer; compare against the analytic state at the
        // time actually reached.
        let t = steps as f64 * h;
        assert!((y[0] - t.cos()).abs() < 1e-6);
        assert!((y[1] + t.sin()).abs() < 1e-6);
        assert!((y[0] - 1.0).abs() < 1e-3 && y[1].abs() < 1e-2);
    }

    #[test]
    fn cubic_rhs_integrated_exactly() {
        // dy/dt = 3t² - 2t + 5, integral over [t, t+h] known in closed form.
        let sys = FnSystem::new(1, |t, _y: &[f64], d: &mut [f64]| d[0] = 3.0 * t * t - 2.0 * t + 5.0);
        let antiderivative = |t: f64| t * t * t - t * t + 5.0 * t;
        for &(t, h) in &[(0.0, 0.5), (1.3, 0.25), (-2.0, 1.0)] {
            let y = rk4_step(&sys, t, &[2.0], h).unwrap();
            let exact = 2.0 + antiderivative(t + h) - antiderivative(t);
            assert!(((y[0] - exact) / exact).abs() <= 10.0 * f64::EPSILON);
        }
    }

    #[test]
    fn constant_rhs_stops_after_expected_entries() {
        let sys = FnSystem::new(1, |_t, _y: &[f64], d: &mut [f64]| d[0] = 0.0);
        let path = integrate_until(&sys, 0.0, &[3.0], &Rk4Config::new(0.25), |t, _| t >= 1.0).unwrap();
        assert_eq!(path.len(), 5);
        assert!(path.iter().all(|p| p.y == vec![3.0]));
        for pair in path.windows(2) {
            assert!((pair[1].t - pair[0].t - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn falling_velocity_crosses_zero_at_one_second() {
        let g = 9.81;
        let sys = FnSystem::new(1, move |_t, _y: &[f64], d: &mut [f64]| d[0] = -g);
        let h = 0.001;
        let path = integrate_until(&sys, 0.0, &[g], &Rk4Config::new(h), |_, y| y[0] <= 0.0).unwrap();
        let last = path.last().unwrap();
        assert!((last.t - 1.0).abs() <= h + 1e-12);
    }

    #[test]
    fn truncation_carries_partial_path() {
        let sys = FnSystem::new(1, |_t, _y: &[f64], d: &mut [f64]| d[0] = 1.0);
        let cfg = Rk4Config::new(0.1).with_max_steps(3);
        match integrate_until(&sys, 0.0, &[0.0], &cfg, |_, _| false) {
            Err(IntegratorError::Truncated { max_steps, partial }) => {
                assert_eq!(max_steps, 3);
                assert_eq!(partial.len(), 4);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn divergence_names_stage() {
        let sys = FnSystem::new(1, |t, _y: &[f64], d: &mut [f64]| {
            d[0] = if t > 0.0 { f64::INFINITY } else { 1.0 }
        });
        let err = rk4_step(&sys, 0.0, &[0.0], 0.1).unwrap_err();
        assert_eq!(err, IntegratorError::Diverged { t: 0.0, stage: Stage::K2 });
        let nan = FnSystem::new(1, |_t, _y: &[f64], d: &mut [f64]| d[0] = f64::NAN);
        assert!(matches!(
            rk4_step(&nan, 0.0, &[0.0], 0.1),
            Err(IntegratorError::Diverged { stage: Stage::K1, .. })
        ));
    }

    #[test]
    fn rejects_bad_steps_and_dimensions() {
        let sys = exponential(1.0);
        assert!(matches!(rk4_step(&sys, 0.0, &[1.0], 0.0), Err(IntegratorError::InvalidStep(_))));
        assert!(matches!(rk4_step(&sys, 0.0, &[1.0], -0.1), Err(IntegratorError::InvalidStep(_))));
        assert!(matches!(
            rk4_step(&sys, 0.0, &[1.0, 2.0], 0.1),
            Err(IntegratorError::DimensionMismatch { expected: 1, got: 2 })
        ));
        let cfg = Rk4Config::new(0.1).with_max_steps(0);
        assert!(matches!(
            integrate_until(&sys, 0.0, &[1.0], &cfg, |_, _| true),
            Err(IntegratorError::InvalidMaxSteps)
        ));
    }

    #[test]
    fn order_on_decay_and_growth() {
        let decay = empirical_order(&exponential(-1.0), 0.0, &[1.0], 1.0, 0.1, |t| vec![(-t).exp()]).unwrap();
        assert!((3.8..=4.2).contains(&decay), "decay order {decay}");
        let growth = empirical_order(&exponential(1.0), 0.0, &[1.0], 1.0, 0.2, |t| vec![t.exp()]).unwrap();
        assert!((3.8..=4.2).contains(&growth), "growth order {growth}");
    }

    #[test]
    fn order_indeterminate_for_linear_solution() {
        let sys = FnSystem::new(1, |_t, _y: &[f64], d: &mut [f64]| d[0] = 2.5);
        let err = empirical_order(&sys, 0.0, &[1.0], 1.0, 0.1, |t| vec![1.0 + 2.5 * t]).unwrap_err();
        assert!(matches!(err, IntegratorError::IndeterminateOrder { .. }));
    }

    #[test]
    fn halving_step_doubles_interior_steps() {
        let sys = exponential(-0.3);
        for &h in &[0.25, 0.1, 0.05, 0.02] {
            let coarse = integrate_until(&sys, 0.0, &[1.0], &Rk4Config::new(h), |t, _| t >= 2.0 - 1e-9).unwrap();
            let fine = integrate_until(&sys, 0.0, &[1.0], &Rk4Config::new(h / 2.0), |t, _| t >= 2.0 - 1e-9).unwrap();
            assert_eq!(2 * (coarse.len() - 1), fine.len() - 1, "h = {h}");
        }
    }

    #[test]
    fn trajectories_are_bit_identical() {
        let run = || {
            integrate_until(&oscillator(), 0.0, &[0.3, -1.2], &Rk4Config::new(0.013), |t, _| t > 5.0).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.t.to_bits(), q.t.to_bits());
            assert!(p.y.iter().zip(&q.y).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn counting_system_sees_four_evaluations_per_step() {
        let counted = CountingSystem::new(exponential(1.0));
        integrate_steps(&counted, 0.0, &[1.0], 0.1, 7).unwrap();
        assert_eq!(counted.evaluations(), 28);
        counted.reset();
        assert_eq!(counted.evaluations(), 0);
    }
}
