use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use mpo_lab::checks::{estep_check, oracle_check, retrace_check, CheckReport};
use mpo_lab::envs::{evaluation_starts, ContinuousEnv};
use mpo_lab::trainer::{evaluate_policy, train, Checkpoint, TrainConfig};

const RUN_MANIFEST_FILE: &str = "run.json";

#[derive(Parser)]
#[command(name = "mpo-lab", version, about = "Train and verify maximum a-posteriori policy optimisation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; writes metrics.csv, run.json and a checkpoint to --out.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out the deterministic policy of a checkpoint and report its mean return.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 99)]
        seed: u64,
    },
    /// Properties of the exact regularized tabular objective.
    OracleCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Temperature dual and sample-weight properties.
    EstepCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Retrace fixed-point and bias properties.
    RetraceCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Outcome {
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunManifest {
    run_id: String,
    seed: u64,
    config: TrainConfig,
    started_unix: u64,
    finished_unix: Option<u64>,
    outcome: Option<Outcome>,
    episodes_to_threshold: Option<usize>,
}

impl RunManifest {
    fn start(config: &TrainConfig) -> Self {
        let text = config.to_toml_string();
        let digest = Sha256::digest(text.as_bytes());
        let run_id = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
        RunManifest {
            run_id,
            seed: config.train.seed,
            config: config.clone(),
            started_unix: unix_now(),
            finished_unix: None,
            outcome: None,
            episodes_to_threshold: None,
        }
    }

    fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::write(dir.join(RUN_MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn run_train(config: Option<PathBuf>, seed: Option<u64>, out: PathBuf) -> anyhow::Result<()> {
    let mut config = match config {
        Some(path) => TrainConfig::from_path(&path).with_context(|| format!("reading {}", path.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        config.train.seed = seed;
        config.validate()?;
    }
    std::fs::create_dir_all(&out)?;
    let mut manifest = RunManifest::start(&config);
    manifest.write(&out)?;
    let result = train(config, Some(&out));
    manifest.finished_unix = Some(unix_now());
    manifest.outcome = Some(if result.is_ok() { Outcome::Completed } else { Outcome::Aborted });
    if let Ok(outcome) = &result {
        manifest.episodes_to_threshold = outcome.episodes_to_threshold;
    }
    manifest.write(&out)?;
    let outcome = result?;
    let last = outcome.metrics.last();
    println!("run {} finished after {} iterations", manifest.run_id, outcome.metrics.len());
    if let Some(row) = last {
        println!("episodes {}  env steps {}  final mean return {:.3}", row.episodes, row.env_steps, row.mean_return);
    }
    if let Some(episodes) = outcome.episodes_to_threshold {
        println!("stop return reached after {episodes} episodes");
    }
    Ok(())
}

fn run_eval(checkpoint: PathBuf, episodes: usize, seed: u64) -> anyhow::Result<()> {
    if episodes == 0 {
        bail!("--episodes must be at least 1");
    }
    let ckpt = Checkpoint::load(&checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let env = ContinuousEnv::new(ckpt.env);
    let starts = evaluation_starts(&env, episodes, seed);
    let mean = evaluate_policy(&env, &ckpt.params.policy, &starts)?;
    println!("{} after {} episodes: mean return {mean:.3} over {episodes} evaluation episodes", env.id().name(), ckpt.episodes);
    Ok(())
}

fn report(result: mpo_lab::Result<CheckReport>) -> anyhow::Result<bool> {
    let report = result?;
    println!("{report}");
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, seed, out } => run_train(config, seed, out).map(|_| true),
        Command::Eval { checkpoint, episodes, seed } => run_eval(checkpoint, episodes, seed).map(|_| true),
        Command::OracleCheck { seed } => report(oracle_check(seed)),
        Command::EstepCheck { seed } => report(estep_check(seed)),
        Command::RetraceCheck { seed } => report(retrace_check(seed)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
