use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use airbrake_core::config::RunConfig;
use airbrake_core::dataset::{read_csv, split_dataset};
use airbrake_core::pipeline::{derive_seed, initial_model, model_bytes, SeedStream};
use serde_json::Value;
use tempfile::TempDir;

fn airbrake(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airbrake"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Small network and few flights so every subcommand finishes quickly.
fn small_config(dir: &Path, epochs: Option<usize>) -> PathBuf {
    let mut train = serde_json::json!({ "layer_dims": [5, 16, 8, 2] });
    if let Some(e) = epochs {
        train["epochs"] = e.into();
    }
    let cfg = serde_json::json!({
        "seed": 9,
        "sim": { "n_flights": 60 },
        "train": train,
    });
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn generate_is_byte_reproducible_and_thread_independent() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), Some(1));
    let c = cfg.to_str().unwrap();
    ok(&airbrake(dir.path(), &["generate", "--config", c, "--out", "a.csv"]));
    ok(&airbrake(dir.path(), &["generate", "--config", c, "--out", "b.csv", "--threads", "3"]));
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());

    let summary = json(&dir.path().join("a.summary.json"));
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["config"]["sim"]["n_flights"], 60);

    ok(&airbrake(dir.path(), &["generate", "--config", c, "--seed", "10", "--out", "c.csv"]));
    assert_ne!(a, fs::read(dir.path().join("c.csv")).unwrap());
    assert_eq!(json(&dir.path().join("c.summary.json"))["config"]["seed"], 10);
}

#[test]
fn invalid_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"seed": 1, "rocket": {"dry_mass": -5.0}}"#).unwrap();
    let out = airbrake(dir.path(), &["generate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rocket.dry_mass"));
}

#[test]
fn missing_inputs_are_io_errors() {
    let dir = TempDir::new().unwrap();
    let out = airbrake(dir.path(), &["train", "--data", "nope.csv", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(3));
    let out = airbrake(dir.path(), &["generate", "--config", "nope.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn zero_epochs_writes_the_initial_network() {
    let dir = TempDir::new().unwrap();
    let cfg_path = small_config(dir.path(), None);
    let c = cfg_path.to_str().unwrap();
    ok(&airbrake(dir.path(), &["generate", "--config", c, "--out", "d.csv"]));
    ok(&airbrake(
        dir.path(),
        &["train", "--config", c, "--data", "d.csv", "--out", "m.json", "--epochs", "0"],
    ));

    let mut cfg = RunConfig::load(&cfg_path).unwrap();
    cfg.train.epochs = 0;
    let samples = read_csv(&dir.path().join("d.csv")).unwrap();
    let split = split_dataset(&samples, derive_seed(cfg.seed, SeedStream::Split)).unwrap();
    let mut expected = initial_model(&cfg, &split).unwrap();
    expected.meta.train_config = Some(cfg.train.train_config(derive_seed(cfg.seed, SeedStream::Shuffle)));
    assert_eq!(fs::read(dir.path().join("m.json")).unwrap(), model_bytes(&expected).unwrap());

    let history = fs::read_to_string(dir.path().join("m.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1);
}

#[test]
fn full_chain_with_default_epochs() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), None);
    let c = cfg.to_str().unwrap();
    ok(&airbrake(dir.path(), &["generate", "--config", c, "--out", "d.csv"]));
    let out = airbrake(dir.path(), &["train", "--config", c, "--data", "d.csv", "--out", "m.json"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("final validation F1"));

    // header plus one row per epoch
    let history = fs::read_to_string(dir.path().join("m.history.csv")).unwrap();
    assert_eq!(history.lines().count(), 101);
    let train_summary = json(&dir.path().join("m.summary.json"));
    assert_eq!(train_summary["epochs_run"], 100);

    ok(&airbrake(
        dir.path(),
        &["evaluate", "--config", c, "--model", "m.json", "--data", "d.csv", "--out", "eval.json"],
    ));
    let eval = json(&dir.path().join("eval.json"));
    let report = &eval["report"];
    let cm = &report["confusion"];
    let total: u64 = ["tp", "fp", "tn", "fn"].iter().map(|k| cm[k].as_u64().unwrap()).sum();
    assert_eq!(total, train_summary["test_size"].as_u64().unwrap());
    assert_eq!(report["n_samples"].as_u64().unwrap(), total);
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(eval["config"]["seed"], 9);

    ok(&airbrake(
        dir.path(),
        &["simulate", "--config", c, "--controller", "mlp", "--model", "m.json", "--out", "mlp.csv"],
    ));
    assert!(json(&dir.path().join("mlp.summary.json"))["model_fingerprint"].is_string());

    ok(&airbrake(dir.path(), &["benchmark", "--config", c, "--model", "m.json", "--out", "bench.json"]));
    let bench = json(&dir.path().join("bench.json"));
    assert_eq!(bench["report"]["nn_macs"], 5 * 16 + 16 * 8 + 8 * 2);
    assert!(bench["report"]["nondeterministic"]["nn"]["median_ns"].is_u64());
    for call in bench["report"]["oracle_calls"].as_array().unwrap() {
        assert_eq!(call["rhs_evals"].as_u64().unwrap(), 4 * call["steps"].as_u64().unwrap());
    }
}

#[test]
fn oracle_controller_does_not_raise_apogee() {
    let dir = TempDir::new().unwrap();
    ok(&airbrake(dir.path(), &["simulate", "--controller", "oracle", "--out", "o.csv"]));
    ok(&airbrake(dir.path(), &["simulate", "--controller", "always-closed", "--out", "c.csv"]));
    let oracle = json(&dir.path().join("o.summary.json"))["apogee"].as_f64().unwrap();
    let closed = json(&dir.path().join("c.summary.json"))["apogee"].as_f64().unwrap();
    assert!(oracle <= closed, "{oracle} > {closed}");
    let csv = fs::read_to_string(dir.path().join("o.csv")).unwrap();
    assert!(csv.lines().count() > 100);
}

#[test]
fn mlp_controller_requires_a_model() {
    let dir = TempDir::new().unwrap();
    let out = airbrake(dir.path(), &["simulate", "--controller", "mlp"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_passes() {
    let dir = TempDir::new().unwrap();
    let out = airbrake(dir.path(), &["gradcheck", "--seeds", "4", "--out", "g.json"]);
    ok(&out);
    let report = json(&dir.path().join("g.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["runs"].as_array().unwrap().len(), 4);
}
