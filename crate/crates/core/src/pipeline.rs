//! The generate → train → evaluate chain plus the simulate, benchmark and
//! gradcheck diagnostics, as used by the command-line tool.
//!
//! Every stage takes a validated [`RunConfig`] and draws all randomness from
//! streams derived from its seed, so identical configs give identical
//! artifacts. Output JSON documents echo the config they were produced with.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dataset::{
    apply_scaler, class_counts, extract_samples, fingerprint, fit_scaler, smote_oversample, split_dataset,
    DatasetError, Sample, SplitDataset,
};
use crate::evalbench::{benchmark, evaluate_model, BenchReport, EvalError, EvalReport, OracleClassifier};
use crate::flight::{
    generate_flight_batch, simulate_flight, Controller, FlightError, FlightState, Trajectory,
};
use crate::integrator::IntegratorError;
use crate::neuralnet::gradcheck::{run_suite, GradCheckReport, DEFAULT_GRADCHECK_DIMS};
use crate::neuralnet::{train, write_history_csv, write_model, Mlp, NeuralNetError, TrainHistory};

/// Gradient-check pass threshold on the worst relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_BATCH: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Divergence,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Io => 3,
            ErrorKind::Divergence => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] NeuralNetError),
    #[error(transparent)]
    Flight(#[from] FlightError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("controller `mlp` requires a model path")]
    MissingModel,
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
    #[error("gradient check failed: max relative error {max:e} >= {tolerance:e}")]
    GradCheckFailed { max: f64, tolerance: f64 },
}

fn flight_kind(e: &FlightError) -> ErrorKind {
    match e {
        FlightError::Io(_) => ErrorKind::Io,
        FlightError::Integrator(IntegratorError::Diverged { .. } | IntegratorError::Truncated { .. }) => {
            ErrorKind::Divergence
        }
        FlightError::Controller(m) => model_kind(m),
        _ => ErrorKind::Validation,
    }
}

fn model_kind(e: &NeuralNetError) -> ErrorKind {
    match e {
        NeuralNetError::Io(_) => ErrorKind::Io,
        NeuralNetError::Diverged { .. } | NeuralNetError::GradientDiverged { .. } => ErrorKind::Divergence,
        _ => ErrorKind::Validation,
    }
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Config(ConfigError::Io { .. }) => ErrorKind::Io,
            PipelineError::Config(_) => ErrorKind::Validation,
            PipelineError::Dataset(DatasetError::Io(_)) => ErrorKind::Io,
            PipelineError::Dataset(DatasetError::Flight(f)) => flight_kind(f),
            PipelineError::Dataset(_) => ErrorKind::Validation,
            PipelineError::Model(m) => model_kind(m),
            PipelineError::Flight(f) => flight_kind(f),
            PipelineError::Eval(EvalError::Model(m)) => model_kind(m),
            PipelineError::Eval(EvalError::Flight(f)) => flight_kind(f),
            PipelineError::Eval(_) => ErrorKind::Validation,
            PipelineError::Io { .. } => ErrorKind::Io,
            PipelineError::MissingModel | PipelineError::ThreadPool(_) => ErrorKind::Validation,
            PipelineError::GradCheckFailed { .. } => ErrorKind::Divergence,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

/// Independent random streams hanging off the global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Flights,
    Split,
    Smote,
    Init,
    Shuffle,
    Simulate,
    BenchStates,
    GradCheck,
}

pub fn derive_seed(seed: u64, stream: SeedStream) -> u64 {
    // split is keyed on the raw seed so the partition is easy to reproduce by hand
    let tag = match stream {
        SeedStream::Split => return seed,
        SeedStream::Flights => 1,
        SeedStream::Smote => 2,
        SeedStream::Init => 3,
        SeedStream::Shuffle => 4,
        SeedStream::Simulate => 5,
        SeedStream::BenchStates => 6,
        SeedStream::GradCheck => 7,
    };
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(tag))
}

/// Runs `f` on a dedicated rayon pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

/// `dir/stem.suffix` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.to_path_buf(),
            source,
        }),
        _ => Ok(()),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types serialize");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, &to_json(value))
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub config: RunConfig,
    pub seed: u64,
    pub n_flights: usize,
    pub n_samples: usize,
    pub closed: usize,
    pub open: usize,
    pub open_fraction: f64,
    pub dataset_fingerprint: String,
}

/// Simulates the configured flights with the airbrakes held closed and labels
/// every ascending state with the oracle.
pub fn generate_dataset(cfg: &RunConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let flights = generate_flight_batch(
        &cfg.rocket,
        cfg.sim.n_flights,
        &cfg.sim.initial,
        cfg.sim.generation_h,
        Controller::AlwaysClosed,
        derive_seed(cfg.seed, SeedStream::Flights),
    )?;
    Ok(extract_samples(&flights, &cfg.rocket, cfg.sim.oracle_h)?)
}

pub fn generate_summary(cfg: &RunConfig, samples: &[Sample]) -> GenerateSummary {
    let (closed, open) = class_counts(samples);
    GenerateSummary {
        config: cfg.clone(),
        seed: cfg.seed,
        n_flights: cfg.sim.n_flights,
        n_samples: samples.len(),
        closed,
        open,
        open_fraction: open as f64 / samples.len().max(1) as f64,
        dataset_fingerprint: fingerprint(samples),
    }
}

/// Writes the dataset CSV and `<stem>.summary.json` beside it.
pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<GenerateSummary> {
    let samples = generate_dataset(cfg)?;
    let mut csv = Vec::new();
    crate::dataset::write_samples(&samples, &mut csv)?;
    write_bytes(out, &csv)?;
    let summary = generate_summary(cfg, &samples);
    write_json(&sibling(out, "summary.json"), &summary)?;
    Ok(summary)
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub history: TrainHistory,
    /// Sizes of the raw splits and of the oversampled training set.
    pub split_sizes: [usize; 3],
    pub oversampled_train: usize,
}

impl TrainOutcome {
    /// Validation F1 of the last epoch, if any epoch ran.
    pub fn final_val_f1(&self) -> Option<f64> {
        self.history.epochs.last().map(|e| e.val_f1)
    }

    /// Validation F1 of the returned checkpoint.
    pub fn best_val_f1(&self) -> Option<f64> {
        let best = self.history.best_epoch?;
        self.history.epochs.iter().find(|e| e.epoch == best).map(|e| e.val_f1)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub config: RunConfig,
    pub dataset_fingerprint: String,
    pub model_fingerprint: String,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub oversampled_train_size: usize,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub final_val_f1: Option<f64>,
    pub best_val_f1: Option<f64>,
}

/// The initial network for `samples`: scaler fit on the training split.
pub fn initial_model(cfg: &RunConfig, split: &SplitDataset) -> Result<Mlp> {
    let scaler = fit_scaler(&split.train)?;
    Ok(Mlp::new(&cfg.train.layer_dims, scaler, derive_seed(cfg.seed, SeedStream::Init))?)
}

/// Split, fit the scaler on the training part, oversample it with SMOTE in
/// scaled space, then train.
pub fn train_model(cfg: &RunConfig, samples: &[Sample]) -> Result<TrainOutcome> {
    cfg.validate()?;
    let split = split_dataset(samples, derive_seed(cfg.seed, SeedStream::Split))?;
    let mlp = initial_model(cfg, &split)?;
    let scaler = *mlp.scaler();
    let train_scaled = smote_oversample(
        &apply_scaler(&scaler, &split.train),
        cfg.train.smote_k,
        derive_seed(cfg.seed, SeedStream::Smote),
    )?;
    let data = SplitDataset {
        train: train_scaled,
        validation: apply_scaler(&scaler, &split.validation),
        test: apply_scaler(&scaler, &split.test),
        seed: split.seed,
    };
    let train_cfg = cfg.train.train_config(derive_seed(cfg.seed, SeedStream::Shuffle));
    let (model, history) = train(mlp, &data, &train_cfg)?;
    Ok(TrainOutcome {
        model,
        history,
        split_sizes: [split.train.len(), split.validation.len(), split.test.len()],
        oversampled_train: data.train.len(),
    })
}

pub fn train_summary(cfg: &RunConfig, samples: &[Sample], outcome: &TrainOutcome) -> TrainSummary {
    TrainSummary {
        config: cfg.clone(),
        dataset_fingerprint: fingerprint(samples),
        model_fingerprint: outcome.model.fingerprint(),
        train_size: outcome.split_sizes[0],
        validation_size: outcome.split_sizes[1],
        test_size: outcome.split_sizes[2],
        oversampled_train_size: outcome.oversampled_train,
        epochs_run: outcome.history.epochs.len(),
        best_epoch: outcome.history.best_epoch,
        final_val_f1: outcome.final_val_f1(),
        best_val_f1: outcome.best_val_f1(),
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<Sample>> {
    Ok(crate::dataset::read_csv(path)?)
}

pub fn read_model_file(path: &Path) -> Result<Mlp> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(crate::neuralnet::read_model(&bytes)?)
}

pub fn model_bytes(mlp: &Mlp) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_model(mlp, &mut out)?;
    Ok(out)
}

/// Writes the model, `<stem>.history.csv` and `<stem>.summary.json`.
pub fn cmd_train(cfg: &RunConfig, data: &Path, model_out: &Path) -> Result<TrainSummary> {
    let samples = read_dataset(data)?;
    let outcome = train_model(cfg, &samples)?;
    write_bytes(model_out, &model_bytes(&outcome.model)?)?;
    let mut history = Vec::new();
    write_history_csv(&outcome.history, &mut history).expect("writing to memory");
    write_bytes(&sibling(model_out, "history.csv"), &history)?;
    let summary = train_summary(cfg, &samples, &outcome);
    write_json(&sibling(model_out, "summary.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateOutput {
    pub config: RunConfig,
    pub split: &'static str,
    pub report: EvalReport,
}

/// Scores `mlp` on the test split of `samples` (the split `train_model` would
/// hold out for the same seed), cross-checked against the oracle.
pub fn evaluate(cfg: &RunConfig, mlp: &Mlp, samples: &[Sample]) -> Result<EvaluateOutput> {
    cfg.validate()?;
    let split = split_dataset(samples, derive_seed(cfg.seed, SeedStream::Split))?;
    let oracle = OracleClassifier {
        model: cfg.rocket,
        h: cfg.sim.oracle_h,
    };
    let weights = mlp.meta.train_config.map(|t| t.class_weights);
    let report = evaluate_model(mlp, &split.test, Some(&oracle), weights)?;
    Ok(EvaluateOutput {
        config: cfg.clone(),
        split: "test",
        report,
    })
}

pub fn cmd_evaluate(cfg: &RunConfig, model: &Path, data: &Path, out: &Path) -> Result<EvaluateOutput> {
    let mlp = read_model_file(model)?;
    let samples = read_dataset(data)?;
    let output = evaluate(cfg, &mlp, &samples)?;
    write_json(out, &output)?;
    Ok(output)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Oracle,
    Mlp,
    AlwaysClosed,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub config: RunConfig,
    pub controller: ControllerKind,
    pub model_fingerprint: Option<String>,
    pub initial_altitude: f64,
    pub initial_velocity: f64,
    pub apogee: f64,
    pub apogee_time: f64,
    pub n_samples: usize,
    pub open_samples: usize,
}

pub fn simulate_initial_state(cfg: &RunConfig) -> FlightState {
    FlightState::coasting(&cfg.rocket, cfg.sim.burnout.altitude, cfg.sim.burnout.velocity)
}

pub fn simulate(cfg: &RunConfig, kind: ControllerKind, mlp: Option<&Mlp>) -> Result<Trajectory> {
    cfg.validate()?;
    let controller = match kind {
        ControllerKind::Oracle => Controller::Oracle { h: cfg.sim.oracle_h },
        ControllerKind::AlwaysClosed => Controller::AlwaysClosed,
        ControllerKind::Mlp => Controller::Mlp(mlp.ok_or(PipelineError::MissingModel)?),
    };
    let initial = simulate_initial_state(cfg);
    Ok(simulate_flight(
        &cfg.rocket,
        &initial,
        cfg.sim.control_h,
        controller,
        derive_seed(cfg.seed, SeedStream::Simulate),
    )?)
}

/// Writes the trajectory CSV and `<stem>.summary.json`.
pub fn cmd_simulate(
    cfg: &RunConfig,
    kind: ControllerKind,
    model: Option<&Path>,
    out: &Path,
) -> Result<SimulateSummary> {
    let mlp = match (kind, model) {
        (ControllerKind::Mlp, None) => return Err(PipelineError::MissingModel),
        (ControllerKind::Mlp, Some(p)) => Some(read_model_file(p)?),
        _ => None,
    };
    let trajectory = simulate(cfg, kind, mlp.as_ref())?;
    let mut csv = Vec::new();
    trajectory.write_csv(&mut csv).expect("writing to memory");
    write_bytes(out, &csv)?;
    let first = trajectory.samples[0];
    let summary = SimulateSummary {
        config: cfg.clone(),
        controller: kind,
        model_fingerprint: mlp.as_ref().map(Mlp::fingerprint),
        initial_altitude: first.altitude,
        initial_velocity: first.v_vertical,
        apogee: trajectory.apogee,
        apogee_time: trajectory.apogee_time,
        n_samples: trajectory.samples.len(),
        open_samples: trajectory.samples.iter().filter(|s| s.airbrake_open).count(),
    };
    write_json(&sibling(out, "summary.json"), &summary)?;
    Ok(summary)
}

// --------------------------------------------------------------- benchmark

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkOutput {
    pub config: RunConfig,
    pub model_fingerprint: String,
    pub report: BenchReport,
}

/// Coast states drawn from the configured burnout ranges.
pub fn benchmark_states(cfg: &RunConfig) -> Vec<FlightState> {
    let base = derive_seed(cfg.seed, SeedStream::BenchStates);
    (0..cfg.bench.n_states)
        .map(|i| {
            let (altitude, velocity) = cfg.sim.initial.sample(base.wrapping_add(i as u64));
            FlightState::coasting(&cfg.rocket, altitude, velocity)
        })
        .collect()
}

pub fn run_benchmark(cfg: &RunConfig, mlp: &Mlp) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let states = benchmark_states(cfg);
    let report = benchmark(mlp, &cfg.rocket, &states, cfg.sim.oracle_h, cfg.bench.repetitions)?;
    Ok(BenchmarkOutput {
        config: cfg.clone(),
        model_fingerprint: mlp.fingerprint(),
        report,
    })
}

pub fn cmd_benchmark(cfg: &RunConfig, model: &Path, out: &Path) -> Result<BenchmarkOutput> {
    let mlp = read_model_file(model)?;
    let output = run_benchmark(cfg, &mlp)?;
    write_json(out, &output)?;
    Ok(output)
}

// --------------------------------------------------------------- gradcheck

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckOutput {
    pub seed: u64,
    pub layer_dims: Vec<usize>,
    pub batch_size: usize,
    pub tolerance: f64,
    pub max_relative_error: f64,
    pub passed: bool,
    pub runs: Vec<GradCheckReport>,
}

/// Finite-difference check on `n_seeds` fresh networks.
pub fn gradcheck(seed: u64, n_seeds: u64) -> Result<GradCheckOutput> {
    let base = derive_seed(seed, SeedStream::GradCheck);
    let runs = run_suite(
        &DEFAULT_GRADCHECK_DIMS,
        (0..n_seeds).map(|i| base.wrapping_add(i)),
        GRADCHECK_BATCH,
    )?;
    let max = runs.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    Ok(GradCheckOutput {
        seed,
        layer_dims: DEFAULT_GRADCHECK_DIMS.to_vec(),
        batch_size: GRADCHECK_BATCH,
        tolerance: GRADCHECK_TOLERANCE,
        max_relative_error: max,
        passed: max < GRADCHECK_TOLERANCE,
        runs,
    })
}

pub fn cmd_gradcheck(seed: u64, n_seeds: u64, out: &Path) -> Result<GradCheckOutput> {
    let output = gradcheck(seed, n_seeds)?;
    write_json(out, &output)?;
    Ok(output)
}

/// Prints one line to stdout; a closed pipe is not an error worth reporting.
pub fn say(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}
