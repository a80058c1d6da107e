//! JSON run configuration shared by every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DEFAULT_SMOTE_K, FEATURE_COUNT};
use crate::evalbench::MIN_REPETITIONS;
use crate::flight::{FlightError, InitialRanges, RocketModel, DEFAULT_ORACLE_STEP, DEFAULT_SIM_STEP};
use crate::neuralnet::{ClassWeights, NeuralNetError, TrainConfig, OUTPUT_CLASSES, DEFAULT_LAYER_DIMS};

/// Seed used when no config file is given.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: `{field}` {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Name of the offending field, when the error is a validation failure.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// RK4 step of the flights that produce the dataset, s.
    pub generation_h: f64,
    /// RK4 step inside each oracle apogee prediction, s.
    pub oracle_h: f64,
    /// RK4 step of closed-loop `simulate` runs, s.
    pub control_h: f64,
    pub n_flights: usize,
    pub initial: InitialRanges,
    /// Burnout state flown by `simulate`.
    pub burnout: BurnoutState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurnoutState {
    /// m
    pub altitude: f64,
    /// m/s, upward
    pub velocity: f64,
}

impl Default for BurnoutState {
    fn default() -> Self {
        Self {
            altitude: 1400.0,
            velocity: 290.0,
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            generation_h: 0.8,
            oracle_h: DEFAULT_ORACLE_STEP,
            control_h: DEFAULT_SIM_STEP,
            n_flights: 200,
            initial: InitialRanges::default(),
            burnout: BurnoutState::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub layer_dims: Vec<usize>,
    pub smote_k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_adam: f64,
    pub class_weights: ClassWeights,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            layer_dims: DEFAULT_LAYER_DIMS.to_vec(),
            smote_k: DEFAULT_SMOTE_K,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon_adam: t.epsilon_adam,
            class_weights: t.class_weights,
            shuffle_each_epoch: t.shuffle_each_epoch,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon_adam: self.epsilon_adam,
            class_weights: self.class_weights,
            seed,
            shuffle_each_epoch: self.shuffle_each_epoch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub repetitions: usize,
    pub n_states: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            repetitions: MIN_REPETITIONS,
            n_states: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: PathBuf,
    pub model: PathBuf,
    /// Directory for evaluation, simulation and benchmark outputs.
    pub reports: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            dataset: "data/dataset.csv".into(),
            model: "out/model.json".into(),
            reports: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; every random stream in the pipeline is derived from it.
    pub seed: u64,
    #[serde(default)]
    pub rocket: RocketModel,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            rocket: RocketModel::default(),
            sim: SimConfig::default(),
            train: TrainSection::default(),
            bench: BenchConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a JSON config; the result is validated.
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.rocket.validate() {
            Err(FlightError::InvalidModel { field, value }) => {
                return Err(ConfigError::invalid(
                    format!("rocket.{field}"),
                    format!("has invalid value {value}"),
                ))
            }
            Err(e) => return Err(ConfigError::invalid("rocket", e.to_string())),
            Ok(()) => {}
        }

        for (field, h) in [
            ("sim.generation_h", self.sim.generation_h),
            ("sim.oracle_h", self.sim.oracle_h),
            ("sim.control_h", self.sim.control_h),
        ] {
            if !(h > 0.0) || !h.is_finite() {
                return Err(ConfigError::invalid(field, format!("must be finite and positive, got {h}")));
            }
        }
        if self.sim.n_flights == 0 {
            return Err(ConfigError::invalid("sim.n_flights", "must be at least 1"));
        }
        if let Err(FlightError::InvalidRange { name, lo, hi }) = self.sim.initial.validate() {
            return Err(ConfigError::invalid(
                format!("sim.initial.{name}"),
                format!("is not a valid ascending range: [{lo}, {hi}]"),
            ));
        }

        let b = self.sim.burnout;
        if !b.altitude.is_finite() {
            return Err(ConfigError::invalid("sim.burnout.altitude", "must be finite"));
        }
        if !(b.velocity > 0.0) || !b.velocity.is_finite() {
            return Err(ConfigError::invalid("sim.burnout.velocity", "must be finite and upward"));
        }

        let dims = &self.train.layer_dims;
        if dims.len() < 2 || dims[0] != FEATURE_COUNT || dims[dims.len() - 1] != OUTPUT_CLASSES {
            return Err(ConfigError::invalid(
                "train.layer_dims",
                format!("must start with {FEATURE_COUNT} and end with {OUTPUT_CLASSES}"),
            ));
        }
        if dims.contains(&0) {
            return Err(ConfigError::invalid("train.layer_dims", "widths must be positive"));
        }
        if self.train.smote_k == 0 {
            return Err(ConfigError::invalid("train.smote_k", "must be at least 1"));
        }
        if let Err(NeuralNetError::InvalidConfig { field, reason }) = self.train.train_config(self.seed).validate() {
            return Err(ConfigError::invalid(format!("train.{field}"), reason));
        }

        if self.bench.repetitions < MIN_REPETITIONS {
            return Err(ConfigError::invalid(
                "bench.repetitions",
                format!("must be at least {MIN_REPETITIONS}"),
            ));
        }
        if self.bench.n_states == 0 {
            return Err(ConfigError::invalid("bench.n_states", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_json(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = parse(r#"{"seed": 7}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.layer_dims, DEFAULT_LAYER_DIMS);
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.train.class_weights, ClassWeights { closed: 0.90, open: 0.05 });
    }

    #[test]
    fn seed_is_required_in_files() {
        assert!(matches!(parse("{}"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn negative_mass_names_the_field() {
        let err = parse(r#"{"seed": 1, "rocket": {"dry_mass": -3.0}}"#).unwrap_err();
        assert_eq!(err.field(), Some("rocket.dry_mass"));
        assert!(err.to_string().contains("rocket.dry_mass"));
    }

    #[test]
    fn nested_field_names() {
        let cases = [
            (r#"{"seed":1,"sim":{"oracle_h":0}}"#, "sim.oracle_h"),
            (r#"{"seed":1,"sim":{"initial":{"altitude":[10,5],"velocity":[100,200]}}}"#, "sim.initial.altitude"),
            (r#"{"seed":1,"train":{"beta1":1.5}}"#, "train.beta1"),
            (r#"{"seed":1,"train":{"layer_dims":[4,2]}}"#, "train.layer_dims"),
            (r#"{"seed":1,"bench":{"repetitions":3}}"#, "bench.repetitions"),
        ];
        for (text, field) in cases {
            assert_eq!(parse(text).unwrap_err().field(), Some(field), "{text}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse(r#"{"seed":1,"rocket":{"dry_mas":3}}"#),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn round_trips() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(parse(&text).unwrap(), cfg);
    }
}
