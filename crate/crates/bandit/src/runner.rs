//! Seeded A/B execution.
//!
//! Every (seed, arm) pair is an isolated task with its own environment and
//! agent, both derived from the seed. Tasks run on a rayon pool sized by
//! `EPINET_BANDIT_THREADS` (hardware count when unset) and are merged in
//! (seed list, arm) order, so outputs do not depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};

use epinet_core::agents::Agent;
use epinet_core::config::{ExperimentConfig, Policy};
use epinet_core::env::Environment;
use epinet_core::rng::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::config_file::{fingerprint, hex, render};
use crate::error::{HarnessError, Result};
use crate::logs::{records, LogWriter};
use crate::metrics::{write_metrics, BucketAggregator, BucketSpec, MetricRow};

pub const THREADS_VAR: &str = "EPINET_BANDIT_THREADS";

/// Random stream labels derived from each seed.
pub const STREAM_LABELS: &[&str] = &[
    "init.towers",
    "init.prior",
    "agent.act",
    "agent.index",
    "agent.train",
    "env.truth",
    "env.items",
    "env.users",
    "env.outcomes",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    Treatment,
    Control,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Treatment, Arm::Control];

    pub fn label(&self) -> &'static str {
        match self {
            Arm::Treatment => "treatment",
            Arm::Control => "control",
        }
    }

    pub fn policy(&self, config: &ExperimentConfig) -> Policy {
        match self {
            Arm::Treatment => config.agent.treatment,
            Arm::Control => config.agent.control,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub arm: String,
    pub seed: u64,
    pub step: u64,
    pub expected_reward: f64,
    pub realized_reward: f64,
    pub oracle_value: f64,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub policy: String,
    pub seed: u64,
    pub impressions: u64,
    pub expected_reward: f64,
    pub realized_reward: f64,
    pub cumulative_regret: f64,
    /// Mean per-step regret over the final 10% of steps.
    pub late_regret: f64,
}

#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub summary: ArmSummary,
    pub metrics: Vec<MetricRow>,
    pub steps: Vec<StepRecord>,
    pub agent: Agent,
}

/// Where a task writes its per-arm files; `None` keeps everything in memory.
#[derive(Debug, Clone, Default)]
pub struct ArmFiles {
    pub log: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

pub fn run_arm(config: &ExperimentConfig, seed: u64, arm: Arm, files: &ArmFiles) -> Result<ArmOutcome> {
    let policy = arm.policy(config);
    let mut env = Environment::new(config.env.clone(), seed)?;
    let mut agent = Agent::new(config.agent_spec(policy), seed)?;
    let mut agg = BucketAggregator::new(BucketSpec::new(config.run.buckets.clone())?);
    let mut log = files.log.as_deref().map(LogWriter::create).transpose()?;
    let weights = config.env.reward_weights;
    let horizon = config.run.horizon;
    let late_from = horizon - horizon / 10;
    let mut steps = Vec::with_capacity(horizon as usize);
    let (mut expected, mut realized, mut regret, mut late) = (0.0, 0.0, 0.0, 0.0);
    for step in 0..horizon {
        let user = env.current_user();
        let action = agent.act(&user, env.pool())?;
        let out = env.step(&action)?;
        for r in records(&out) {
            agg.add(&r);
            if let (Some(w), Some(path)) = (log.as_mut(), files.log.as_deref()) {
                w.write(&r).map_err(|e| HarnessError::format(path, e.to_string()))?;
            }
        }
        let rec = StepRecord {
            arm: arm.label().into(),
            seed,
            step,
            expected_reward: out.expected_reward(),
            realized_reward: out.realized_reward(&weights),
            oracle_value: out.oracle_value,
            regret: out.regret(),
        };
        if !(rec.expected_reward.is_finite() && rec.regret.is_finite()) {
            return Err(HarnessError::Numerical(format!(
                "non-finite reward at step {step} ({} seed {seed})",
                arm.label()
            )));
        }
        expected += rec.expected_reward;
        realized += rec.realized_reward;
        regret += rec.regret;
        if step >= late_from {
            late += rec.regret;
        }
        steps.push(rec);
        agent.observe_and_update(&out.interactions)?;
    }
    if let (Some(w), Some(path)) = (log, files.log.as_deref()) {
        w.finish().map_err(|e| HarnessError::io(path, e))?;
    }
    if let Some(path) = &files.checkpoint {
        checkpoint::save_agent(path, &agent)?;
    }
    let metrics = if horizon > 0 {
        agg.rows(arm.label(), seed)
    } else {
        Vec::new()
    };
    let late_steps = horizon - late_from;
    Ok(ArmOutcome {
        summary: ArmSummary {
            arm: arm.label().into(),
            policy: policy.name().into(),
            seed,
            impressions: agg.total_impressions(),
            expected_reward: expected,
            realized_reward: realized,
            cumulative_regret: regret,
            late_regret: if late_steps > 0 { late / late_steps as f64 } else { 0.0 },
        },
        metrics,
        steps,
        agent,
    })
}

/// Thread count from `EPINET_BANDIT_THREADS`; `None` means hardware count.
pub fn thread_limit() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(HarnessError::Config(vec![format!(
                "{THREADS_VAR} must be a positive integer, got `{v}`"
            )])),
        },
    }
}

fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_limit()? {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| HarnessError::Config(vec![format!("cannot start worker threads: {e}")]))
}

/// Run every (seed, arm) task; results in (seed list, arm) order.
pub fn run_all(config: &ExperimentConfig, dir: Option<&Path>) -> Result<Vec<ArmOutcome>> {
    config.validate()?;
    let tasks: Vec<(u64, Arm)> = config
        .run
        .seeds
        .iter()
        .flat_map(|&s| Arm::BOTH.map(|a| (s, a)))
        .collect();
    let files = |seed: u64, arm: Arm| match dir {
        None => ArmFiles::default(),
        Some(d) => ArmFiles {
            log: config
                .run
                .write_logs
                .then(|| d.join("logs").join(format!("{}_seed{seed}.tsv", arm.label()))),
            checkpoint: Some(d.join("checkpoints").join(format!("{}_seed{seed}.ckpt", arm.label()))),
        },
    };
    pool()?.install(|| {
        tasks
            .par_iter()
            .map(|&(seed, arm)| run_arm(config, seed, arm, &files(seed, arm)))
            .collect()
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedRoots {
    pub seed: u64,
    /// Derived seed of every labelled stream, hex.
    pub streams: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub code_version: String,
    pub config_sha256: String,
    pub config: String,
    pub treatment: String,
    pub control: String,
    pub horizon: u64,
    pub seeds: Vec<SeedRoots>,
    /// SHA-256 of each table written alongside the manifest.
    pub files: Vec<(String, String)>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex(&Sha256::digest(bytes)))
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

pub struct RunReport {
    pub dir: PathBuf,
    pub outcomes: Vec<ArmOutcome>,
}

/// Run an experiment and write `metrics.csv`, `steps.csv`, `summary.csv`,
/// `config.toml`, `manifest.json` and, when enabled, logs and checkpoints.
pub fn run_experiment(config: &ExperimentConfig, dir: &Path) -> Result<RunReport> {
    config.validate()?;
    for sub in ["", "logs", "checkpoints"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| HarnessError::io(&p, e))?;
    }
    let outcomes = run_all(config, Some(dir))?;

    let metrics: Vec<MetricRow> = outcomes.iter().flat_map(|o| o.metrics.iter().cloned()).collect();
    let mut buf = Vec::new();
    write_metrics(&mut buf, &metrics).expect("in-memory csv");
    let mut files = vec![("metrics.csv".to_string(), write_file(&dir.join("metrics.csv"), &buf)?)];

    let steps: Vec<StepRecord> = outcomes.iter().flat_map(|o| o.steps.iter().cloned()).collect();
    let steps_bytes = if steps.is_empty() {
        b"arm,seed,step,expected_reward,realized_reward,oracle_value,regret\n".to_vec()
    } else {
        csv_bytes(&steps)
    };
    files.push(("steps.csv".into(), write_file(&dir.join("steps.csv"), &steps_bytes)?));
    let summaries: Vec<ArmSummary> = outcomes.iter().map(|o| o.summary.clone()).collect();
    files.push(("summary.csv".into(), write_file(&dir.join("summary.csv"), &csv_bytes(&summaries))?));
    let text = render(config);
    files.push(("config.toml".into(), write_file(&dir.join("config.toml"), text.as_bytes())?));

    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: fingerprint(config),
        config: text,
        treatment: config.agent.treatment.name().into(),
        control: config.agent.control.name().into(),
        horizon: config.run.horizon,
        seeds: config
            .run
            .seeds
            .iter()
            .map(|&seed| SeedRoots {
                seed,
                streams: STREAM_LABELS
                    .iter()
                    .map(|l| (l.to_string(), format!("{:016x}", derive_seed(seed, l))))
                    .collect(),
            })
            .collect(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join("manifest.json"), json.as_bytes())?;
    Ok(RunReport {
        dir: dir.to_path_buf(),
        outcomes,
    })
}
