use std::path::{Path, PathBuf};
use std::process::ExitCode;

use airbrake_core::config::RunConfig;
use airbrake_core::pipeline::{self, say, ControllerKind, PipelineError};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "airbrake", version, about = "RK4 apogee oracle and MLP surrogate for airbrake control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for batch simulation and labelling
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate flights and write the oracle-labelled dataset CSV
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the surrogate on a dataset
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model JSON path; history and summary are written beside it
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a model on the held-out test split
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fly one closed-loop coast and write the trajectory CSV
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        controller: ControllerArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare surrogate inference with oracle prediction cost
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the backpropagated gradients
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Number of random networks to check
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Oracle,
    Mlp,
    AlwaysClosed,
}

impl From<ControllerArg> for ControllerKind {
    fn from(c: ControllerArg) -> Self {
        match c {
            ControllerArg::Oracle => ControllerKind::Oracle,
            ControllerArg::Mlp => ControllerKind::Mlp,
            ControllerArg::AlwaysClosed => ControllerKind::AlwaysClosed,
        }
    }
}

impl Common {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn report_path(cfg: &RunConfig, out: Option<PathBuf>, name: &str) -> PathBuf {
    out.unwrap_or_else(|| cfg.paths.reports.join(name))
}

fn or(path: Option<PathBuf>, default: &Path) -> PathBuf {
    path.unwrap_or_else(|| default.to_path_buf())
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Generate { common, out } => {
            let cfg = common.load()?;
            let out = or(out, &cfg.paths.dataset);
            let s = pipeline::with_threads(common.threads, || pipeline::cmd_generate(&cfg, &out))??;
            say(&format!(
                "wrote {} samples ({} open, fraction {:.4}) to {}",
                s.n_samples,
                s.open,
                s.open_fraction,
                out.display()
            ));
        }
        Command::Train {
            common,
            data,
            out,
            epochs,
        } => {
            let mut cfg = common.load()?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let data = or(data, &cfg.paths.dataset);
            let out = or(out, &cfg.paths.model);
            let s = pipeline::with_threads(common.threads, || pipeline::cmd_train(&cfg, &data, &out))??;
            match (s.final_val_f1, s.best_val_f1, s.best_epoch) {
                (Some(last), Some(best), Some(epoch)) => say(&format!(
                    "final validation F1 {last:.4}; kept epoch {epoch} (validation F1 {best:.4})"
                )),
                _ => say("no epochs run; saved the initial network"),
            }
            say(&format!("wrote {}", out.display()));
        }
        Command::Evaluate {
            common,
            model,
            data,
            out,
        } => {
            let cfg = common.load()?;
            let model = or(model, &cfg.paths.model);
            let data = or(data, &cfg.paths.dataset);
            let out = report_path(&cfg, out, "eval.json");
            let o = pipeline::with_threads(common.threads, || pipeline::cmd_evaluate(&cfg, &model, &data, &out))??;
            say(&format!(
                "test split: F1 {:.4}, accuracy {:.4}, oracle agreement {:.4} over {} samples",
                o.report.f1, o.report.accuracy, o.report.oracle_agreement, o.report.n_samples
            ));
        }
        Command::Simulate {
            common,
            controller,
            model,
            out,
        } => {
            let cfg = common.load()?;
            let out = report_path(&cfg, out, "trajectory.csv");
            let kind = ControllerKind::from(controller);
            let s = pipeline::with_threads(common.threads, || {
                pipeline::cmd_simulate(&cfg, kind, model.as_deref(), &out)
            })??;
            say(&format!(
                "apogee {:.2} m at t = {:.2} s (target {:.0} m); trajectory in {}",
                s.apogee,
                s.apogee_time,
                cfg.rocket.target_apogee,
                out.display()
            ));
        }
        Command::Benchmark { common, model, out } => {
            let cfg = common.load()?;
            let model = or(model, &cfg.paths.model);
            let out = report_path(&cfg, out, "bench.json");
            let o = pipeline::with_threads(common.threads, || pipeline::cmd_benchmark(&cfg, &model, &out))??;
            let t = o.report.nondeterministic;
            say(&format!(
                "nn: {} MACs, median {} ns; oracle: {:.1} steps, median {} ns",
                o.report.nn_macs, t.nn.median_ns, o.report.mean_steps_per_oracle_call, t.oracle.median_ns
            ));
        }
        Command::Gradcheck { common, seeds, out } => {
            let cfg = common.load()?;
            let out = report_path(&cfg, out, "gradcheck.json");
            let o = pipeline::with_threads(common.threads, || pipeline::cmd_gradcheck(cfg.seed, seeds, &out))??;
            say(&format!(
                "max relative error {:.3e} over {} networks: {}",
                o.max_relative_error,
                o.runs.len(),
                if o.passed { "pass" } else { "FAIL" }
            ));
            if !o.passed {
                return Err(PipelineError::GradCheckFailed {
                    max: o.max_relative_error,
                    tolerance: o.tolerance,
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
