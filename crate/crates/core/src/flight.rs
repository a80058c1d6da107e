//! Coast-phase rocket dynamics, the RK4 apogee oracle and closed-loop flights.
//!
//! The vehicle is modelled as a point mass moving vertically with quadratic
//! drag in an exponential atmosphere. Lateral accelerations are synthetic
//! zero-mean Gaussian noise so that every state carries the full five-feature
//! sensor vector.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{IntegratorError, OdeSystem, Rk4Stepper, DEFAULT_MAX_STEPS};
use crate::neuralnet::{Mlp, NeuralNetError};

/// Default step of the apogee oracle, seconds.
pub const DEFAULT_ORACLE_STEP: f64 = 0.01;
/// Default step of closed-loop simulation, seconds.
pub const DEFAULT_SIM_STEP: f64 = 0.01;

pub const TRAJECTORY_CSV_HEADER: &str =
    "t_s,altitude_m,v_vertical_mps,accel_x_mps2,accel_y_mps2,accel_z_mps2,airbrake_open";

/// Airbrake command. `Open` is the positive class everywhere in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Closed = 0,
    Open = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Label::Closed),
            1 => Some(Label::Open),
            _ => None,
        }
    }

    pub fn is_open(self) -> bool {
        self == Label::Open
    }
}

impl From<bool> for Label {
    fn from(open: bool) -> Self {
        if open {
            Label::Open
        } else {
            Label::Closed
        }
    }
}

/// Kinematic state as seen by the sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightState {
    pub t: f64,
    pub altitude: f64,
    pub v_vertical: f64,
    /// `(ax, ay, az)` as most recently computed, m/s².
    pub accel: [f64; 3],
    pub airbrake_open: bool,
}

impl FlightState {
    /// A state at rest laterally with `az` taken from the closed-airbrake dynamics.
    pub fn coasting(model: &RocketModel, altitude: f64, v_vertical: f64) -> Self {
        Self {
            t: 0.0,
            altitude,
            v_vertical,
            accel: [0.0, 0.0, model.vertical_acceleration(altitude, v_vertical, false)],
            airbrake_open: false,
        }
    }

    /// `(altitude, v_vertical, ax, ay, az)`.
    pub fn features(&self) -> [f64; 5] {
        [
            self.altitude,
            self.v_vertical,
            self.accel[0],
            self.accel[1],
            self.accel[2],
        ]
    }
}

/// Physical parameters of the coasting vehicle and the controller target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocketModel {
    /// kg
    pub dry_mass: f64,
    pub cd_clean: f64,
    /// Drag coefficient added by deployed airbrakes, referenced to `airbrake_area`.
    pub cd_airbrake_delta: f64,
    /// m²
    pub ref_area: f64,
    /// m²
    pub airbrake_area: f64,
    /// Sea-level density, kg/m³
    pub rho0: f64,
    /// m
    pub scale_height: f64,
    /// m/s²
    pub g: f64,
    /// m
    pub target_apogee: f64,
    /// m
    pub deadband: f64,
    /// Standard deviation of the synthetic lateral accelerations, m/s².
    pub lateral_accel_sigma: f64,
}

impl Default for RocketModel {
    fn default() -> Self {
        Self {
            dry_mass: 18.0,
            cd_clean: 0.45,
            cd_airbrake_delta: 1.2,
            ref_area: 0.019113,
            airbrake_area: 0.012,
            rho0: 1.225,
            scale_height: 8500.0,
            g: 9.81,
            target_apogee: 3450.0,
            deadband: 0.0,
            lateral_accel_sigma: 0.5,
        }
    }
}

impl RocketModel {
    /// Same vehicle with every drag term removed.
    pub fn drag_free(self) -> Self {
        Self {
            cd_clean: 0.0,
            cd_airbrake_delta: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), FlightError> {
        let checks: [(&'static str, f64, bool); 10] = [
            ("dry_mass", self.dry_mass, self.dry_mass > 0.0),
            ("ref_area", self.ref_area, self.ref_area > 0.0),
            ("cd_clean", self.cd_clean, self.cd_clean >= 0.0),
            ("cd_airbrake_delta", self.cd_airbrake_delta, self.cd_airbrake_delta >= 0.0),
            ("airbrake_area", self.airbrake_area, self.airbrake_area >= 0.0),
            ("rho0", self.rho0, self.rho0 >= 0.0),
            ("scale_height", self.scale_height, self.scale_height > 0.0),
            ("g", self.g, self.g > 0.0),
            ("deadband", self.deadband, self.deadband >= 0.0),
            ("lateral_accel_sigma", self.lateral_accel_sigma, self.lateral_accel_sigma >= 0.0),
        ];
        for (field, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(FlightError::InvalidModel { field, value });
            }
        }
        if !self.target_apogee.is_finite() {
            return Err(FlightError::InvalidModel {
                field: "target_apogee",
                value: self.target_apogee,
            });
        }
        Ok(())
    }

    pub fn density(&self, altitude: f64) -> f64 {
        self.rho0 * (-altitude / self.scale_height).exp()
    }

    /// Effective `Cd·A` for the given airbrake setting.
    pub fn drag_area(&self, airbrake_open: bool) -> f64 {
        let brake = if airbrake_open {
            self.cd_airbrake_delta * self.airbrake_area
        } else {
            0.0
        };
        self.cd_clean * self.ref_area + brake
    }

    /// Net vertical acceleration, gravity included.
    pub fn vertical_acceleration(&self, altitude: f64, v: f64, airbrake_open: bool) -> f64 {
        let drag = self.density(altitude) * self.drag_area(airbrake_open) * v * v.abs()
            / (2.0 * self.dry_mass);
        -self.g - drag
    }
}

/// `y = [altitude, v_vertical]` with the airbrake setting frozen.
#[derive(Debug, Clone, Copy)]
pub struct CoastDynamics {
    g: f64,
    rho0: f64,
    inv_scale_height: f64,
    /// ½·Cd·A/m
    drag_factor: f64,
}

impl OdeSystem for CoastDynamics {
    fn dimension(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        let rho = self.rho0 * (-y[0] * self.inv_scale_height).exp();
        dydt[0] = y[1];
        dydt[1] = -self.g - rho * self.drag_factor * y[1] * y[1].abs();
    }
}

pub fn coast_dynamics(model: &RocketModel, airbrake_open: bool) -> Result<CoastDynamics, FlightError> {
    model.validate()?;
    Ok(CoastDynamics {
        g: model.g,
        rho0: model.rho0,
        inv_scale_height: 1.0 / model.scale_height,
        drag_factor: model.drag_area(airbrake_open) / (2.0 * model.dry_mass),
    })
}

#[derive(Debug, Error)]
pub enum FlightError {
    #[error("invalid rocket model: {field} = {value}")]
    InvalidModel { field: &'static str, value: f64 },
    #[error("state is not ascending (v_vertical = {0})")]
    NotAscending(f64),
    #[error("step size must be finite and strictly positive, got {0}")]
    InvalidStep(f64),
    #[error("invalid initial-condition range {name}: [{lo}, {hi}]")]
    InvalidRange { name: &'static str, lo: f64, hi: f64 },
    #[error("flight batch must contain at least one flight")]
    EmptyBatch,
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("surrogate controller failed: {0}")]
    Controller(#[from] NeuralNetError),
    #[error("trajectory output failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Apogee and the work spent finding it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApogeePrediction {
    pub apogee: f64,
    pub steps: u64,
}

/// Predicts the coast apogee from `state` with the airbrakes held fixed.
pub fn predict_apogee(
    model: &RocketModel,
    state: &FlightState,
    h: f64,
    assume_open: bool,
) -> Result<f64, FlightError> {
    let dynamics = coast_dynamics(model, assume_open)?;
    Ok(predict_apogee_with(&dynamics, state, h)?.apogee)
}

/// Integrates `dynamics` from `state` until vertical velocity is no longer
/// positive, returning the highest altitude seen on the grid.
pub fn predict_apogee_with<S: OdeSystem + ?Sized>(
    dynamics: &S,
    state: &FlightState,
    h: f64,
) -> Result<ApogeePrediction, FlightError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(FlightError::InvalidStep(h));
    }
    if !(state.v_vertical > 0.0) {
        return Err(FlightError::NotAscending(state.v_vertical));
    }
    let mut stepper = Rk4Stepper::new(2);
    let mut y = [state.altitude, state.v_vertical];
    let mut apogee = state.altitude;
    let mut steps = 0u64;
    while y[1] > 0.0 {
        if steps as usize >= DEFAULT_MAX_STEPS {
            return Err(IntegratorError::Truncated {
                max_steps: DEFAULT_MAX_STEPS,
                partial: Vec::new(),
            }
            .into());
        }
        stepper.step(dynamics, state.t + steps as f64 * h, &mut y, h)?;
        steps += 1;
        apogee = apogee.max(y[0]);
    }
    Ok(ApogeePrediction { apogee, steps })
}

/// Open iff the closed-airbrake apogee exceeds `target_apogee + deadband`.
pub fn oracle_label(model: &RocketModel, state: &FlightState, h: f64) -> Result<Label, FlightError> {
    let predicted = predict_apogee(model, state, h, false)?;
    Ok(Label::from(predicted > model.target_apogee + model.deadband))
}

/// Airbrake policy applied once per simulation step.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// RK4 apogee prediction with the given oracle step.
    Oracle { h: f64 },
    Mlp(&'a Mlp),
    AlwaysClosed,
}

impl Controller<'_> {
    fn decide(&self, model: &RocketModel, state: &FlightState) -> Result<bool, FlightError> {
        match self {
            Controller::AlwaysClosed => Ok(false),
            Controller::Oracle { h } => Ok(oracle_label(model, state, *h)?.is_open()),
            Controller::Mlp(mlp) => Ok(mlp.predict(&state.features())?.is_open()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Controller::Oracle { .. } => "oracle",
            Controller::Mlp(_) => "mlp",
            Controller::AlwaysClosed => "always-closed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<FlightState>,
    pub apogee: f64,
    pub apogee_time: f64,
}

impl Trajectory {
    fn from_samples(samples: Vec<FlightState>) -> Self {
        let (apogee, apogee_time) = samples
            .iter()
            .fold((f64::NEG_INFINITY, 0.0), |(best, bt), s| {
                if s.altitude > best {
                    (s.altitude, s.t)
                } else {
                    (best, bt)
                }
            });
        Self {
            samples,
            apogee,
            apogee_time,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
        for s in &self.samples {
            // Shortest round-trip formatting: exact, never fewer significant
            // digits than the value carries.
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.t,
                s.altitude,
                s.v_vertical,
                s.accel[0],
                s.accel[1],
                s.accel[2],
                u8::from(s.airbrake_open)
            )?;
        }
        out.flush()
    }

    pub fn save_csv(&self, path: &Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

struct LateralNoise {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl LateralNoise {
    fn new(sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma validated"));
        Self { rng, normal }
    }

    fn sample(&mut self) -> [f64; 2] {
        match &self.normal {
            Some(n) => [n.sample(&mut self.rng), n.sample(&mut self.rng)],
            None => [0.0, 0.0],
        }
    }
}

/// Closed-loop coast from `initial` to apogee.
///
/// Each step the controller sets the airbrakes from the current state, one
/// RK4 step advances `[altitude, v]`, and the new sample records `az` for the
/// airbrake setting in force plus fresh lateral noise. The run ends with the
/// first sample whose vertical velocity is not positive.
pub fn simulate_flight(
    model: &RocketModel,
    initial: &FlightState,
    h: f64,
    controller: Controller<'_>,
    seed: u64,
) -> Result<Trajectory, FlightError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(FlightError::InvalidStep(h));
    }
    if !(initial.v_vertical > 0.0) {
        return Err(FlightError::NotAscending(initial.v_vertical));
    }
    let closed = coast_dynamics(model, false)?;
    let open = coast_dynamics(model, true)?;
    let mut noise = LateralNoise::new(model.lateral_accel_sigma, seed);
    let mut stepper = Rk4Stepper::new(2);

    let [ax, ay] = noise.sample();
    let mut state = FlightState {
        accel: [
            ax,
            ay,
            model.vertical_acceleration(initial.altitude, initial.v_vertical, initial.airbrake_open),
        ],
        ..*initial
    };
    let mut samples = vec![state];
    let mut step = 0u64;
    while state.v_vertical > 0.0 {
        if step as usize >= DEFAULT_MAX_STEPS {
            return Err(IntegratorError::Truncated {
                max_steps: DEFAULT_MAX_STEPS,
                partial: Vec::new(),
            }
            .into());
        }
        let brake = controller.decide(model, &state)?;
        state.airbrake_open = brake;
        samples.last_mut().expect("non-empty").airbrake_open = brake;

        let t = initial.t + step as f64 * h;
        let mut y = [state.altitude, state.v_vertical];
        if brake {
            stepper.step(&open, t, &mut y, h)?;
        } else {
            stepper.step(&closed, t, &mut y, h)?;
        }
        step += 1;
        let [ax, ay] = noise.sample();
        state = FlightState {
            t: initial.t + step as f64 * h,
            altitude: y[0],
            v_vertical: y[1],
            accel: [ax, ay, model.vertical_acceleration(y[0], y[1], brake)],
            airbrake_open: brake,
        };
        samples.push(state);
    }
    Ok(Trajectory::from_samples(samples))
}

/// Inclusive uniform ranges for burnout states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialRanges {
    pub altitude: [f64; 2],
    pub velocity: [f64; 2],
}

impl Default for InitialRanges {
    fn default() -> Self {
        Self {
            altitude: [500.0, 1500.0],
            velocity: [150.0, 300.0],
        }
    }
}

impl InitialRanges {
    pub fn validate(&self) -> Result<(), FlightError> {
        for (name, [lo, hi]) in [("altitude", self.altitude), ("velocity", self.velocity)] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(FlightError::InvalidRange { name, lo, hi });
            }
        }
        if !(self.velocity[0] > 0.0) {
            return Err(FlightError::InvalidRange {
                name: "velocity",
                lo: self.velocity[0],
                hi: self.velocity[1],
            });
        }
        Ok(())
    }

    /// Draws `(altitude, velocity)` from a flight's sub-seed.
    pub fn sample(&self, sub_seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
        rng.set_stream(1);
        let draw = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| {
            Uniform::new_inclusive(lo, hi)
                .expect("range validated")
                .sample(rng)
        };
        let altitude = draw(&mut rng, self.altitude);
        let velocity = draw(&mut rng, self.velocity);
        (altitude, velocity)
    }
}

/// Runs `n_flights` independent flights; flight `i` uses sub-seed `seed + i`
/// both for its initial condition and its sensor noise. Output order is by
/// flight index regardless of how the work is scheduled.
pub fn generate_flight_batch(
    model: &RocketModel,
    n_flights: usize,
    ranges: &InitialRanges,
    h: f64,
    controller: Controller<'_>,
    seed: u64,
) -> Result<Vec<Trajectory>, FlightError> {
    if n_flights == 0 {
        return Err(FlightError::EmptyBatch);
    }
    model.validate()?;
    ranges.validate()?;
    (0..n_flights)
        .into_par_iter()
        .map(|i| {
            let sub_seed = seed.wrapping_add(i as u64);
            let (altitude, velocity) = ranges.sample(sub_seed);
            let initial = FlightState::coasting(model, altitude, velocity);
            simulate_flight(model, &initial, h, controller, sub_seed)
        })
        .collect()
}
