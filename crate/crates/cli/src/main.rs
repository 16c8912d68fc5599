//! `robsep`: train, evaluate and verify observation-robust separation
//! policies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;

use robsep_core::config::Config;
use robsep_core::eval::{evaluate, run_suites, write_csv, EvalSettings, PolicyUnderTest, SuiteOptions};
use robsep_core::net::{load_checkpoint, save_checkpoint};
use robsep_core::trainer::{pretrain_nominal, robust_train, write_training_log, TeacherBundle};
use robsep_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_CHECKPOINT_VERSION: u8 = 4;
const EXIT_BOUND_VIOLATION: u8 = 5;

#[derive(Parser)]
#[command(name = "robsep", version, about = "Observation-robust PPO for small UAS separation assurance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nominal pretraining followed by robust training.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoints and training.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Paired evaluation of the nominal and robust policies over corruption rates.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated corruption rates; defaults to the config's grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Evaluation seed; defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Nominal (teacher) checkpoint; defaults to OUT/teacher.ckpt.
        #[arg(long)]
        nominal: Option<PathBuf>,
        /// Robust checkpoint; defaults to OUT/robust.ckpt.
        #[arg(long)]
        robust: Option<PathBuf>,
    },
    /// Randomized certification of the adversary and the performance bounds.
    VerifyBounds {
        /// Trials per suite.
        #[arg(long)]
        trials: Option<usize>,
        /// Short Monte Carlo rollouts and 10 trials per suite unless given.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Scale every bound by this factor to check that violations are reported.
        #[arg(long, hide = true)]
        inject_fault: Option<f64>,
    },
}

enum Failure {
    Code(u8, anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let code = match e.downcast_ref::<Error>() {
            Some(Error::Config(_)) => EXIT_CONFIG,
            Some(Error::Divergence { .. }) => EXIT_DIVERGENCE,
            Some(Error::CheckpointVersion { .. }) => EXIT_CHECKPOINT_VERSION,
            _ => 1,
        };
        Failure::Code(code, e)
    }
}

fn load_config(path: &Path) -> anyhow::Result<Config> {
    Config::load(path).map_err(anyhow::Error::from)
}

fn train(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut opts = cfg.run_options().map_err(anyhow::Error::from)?;
    opts.divergence_dir = Some(out.to_path_buf());

    info!("phase 1: nominal pretraining for {} steps", cfg.training.total_steps);
    let nominal = pretrain_nominal(&opts, &cfg.training).map_err(anyhow::Error::from)?;
    save_checkpoint(&nominal.net, &out.join("teacher.ckpt")).map_err(anyhow::Error::from)?;
    let teacher = TeacherBundle::freeze(nominal.net);

    info!("phase 2: robust training for {} steps", cfg.training.total_steps);
    let robust = robust_train(&opts, &cfg.training, &teacher).map_err(anyhow::Error::from)?;
    save_checkpoint(&robust.net, &out.join("robust.ckpt")).map_err(anyhow::Error::from)?;

    let mut log = nominal.log;
    log.extend(robust.log);
    write_training_log(&out.join("training.csv"), &log).map_err(anyhow::Error::from)?;
    info!("wrote teacher.ckpt, robust.ckpt and training.csv to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    config: &Path,
    grid: Option<Vec<f64>>,
    episodes: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    nominal: Option<PathBuf>,
    robust: Option<PathBuf>,
) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let settings = EvalSettings {
        rates: grid.unwrap_or_else(|| cfg.eval.rates.clone()),
        episodes: episodes.unwrap_or(cfg.eval.episodes),
        actions: cfg.eval.actions,
    };
    settings.validate().map_err(anyhow::Error::from)?;
    let nominal_path = nominal.unwrap_or_else(|| out.join("teacher.ckpt"));
    let robust_path = robust.unwrap_or_else(|| out.join("robust.ckpt"));
    let nominal = load_checkpoint(&nominal_path).map_err(anyhow::Error::from)?;
    let robust = load_checkpoint(&robust_path).map_err(anyhow::Error::from)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let policies = [
        PolicyUnderTest { tag: "nominal", policy: &nominal, teacher: &nominal },
        PolicyUnderTest { tag: "robust", policy: &robust, teacher: &nominal },
    ];
    let scenario = cfg.scenario().map_err(anyhow::Error::from)?;
    let kappa = cfg.kappa().map_err(anyhow::Error::from)?;
    let (cells, episodes) =
        evaluate(&scenario, &kappa, &policies, &settings, seed.unwrap_or(cfg.seed)).map_err(anyhow::Error::from)?;
    write_csv(&out.join("metrics.csv"), &cells).map_err(anyhow::Error::from)?;
    write_csv(&out.join("episodes.csv"), &episodes).map_err(anyhow::Error::from)?;
    info!("wrote metrics.csv and episodes.csv to {}", out.display());
    Ok(())
}

fn verify(trials: Option<usize>, quick: bool, seed: u64, out: &Path, fault: Option<f64>) -> Result<(), Failure> {
    let mut opts = if quick { SuiteOptions::quick(trials.unwrap_or(10), seed) } else { SuiteOptions { seed, ..Default::default() } };
    if let Some(t) = trials {
        opts = opts.with_trials(t);
    }
    if let Some(f) = fault {
        opts.rhs_scale = f;
    }
    let (summary, rows) = run_suites(&opts).map_err(anyhow::Error::from)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_csv(&out.join("bounds.csv"), &rows).map_err(anyhow::Error::from)?;
    let mut violations = 0;
    for s in &summary {
        println!("{:<22} {:>6} checks {:>4} violations {:>8.2} s", s.suite, s.trials, s.violations, s.seconds);
        violations += s.violations;
    }
    if violations > 0 {
        return Err(Failure::Code(EXIT_BOUND_VIOLATION, anyhow::anyhow!("{violations} bound violations")));
    }
    println!("all bounds hold");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out } => train(&config, &out),
        Command::Eval { config, grid, episodes, seed, out, nominal, robust } => {
            eval(&config, grid, episodes, seed, &out, nominal, robust)
        }
        Command::VerifyBounds { trials, quick, seed, out, inject_fault } => verify(trials, quick, seed, &out, inject_fault),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Code(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
