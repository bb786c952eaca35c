//! Typed experiment configuration. Parsing from text lives in the
//! companion crate; this module holds the values, defaults and validation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::agents::{AgentKind, AgentSpec};
use crate::env::{EnvConfig, NUM_LABELS};
use crate::error::{Error, Result};
use crate::model::ModelShape;
use crate::nn::Optimizer;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_tasks: usize,
    pub tower_hidden: Vec<usize>,
    pub base_hidden: Vec<usize>,
    pub epinet_hidden: Vec<usize>,
    pub index_dim: usize,
    pub prior_scale: f64,
    /// Label index the overarch is trained on (0 = ws).
    pub epinet_task: usize,
    /// Control score weights on (ws, like, share, vvs).
    pub control_weights: Vec<f64>,
    pub per_example_index: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            num_tasks: NUM_LABELS,
            tower_hidden: vec![64, 64],
            base_hidden: vec![64, 32],
            epinet_hidden: vec![64, 32],
            index_dim: 5,
            prior_scale: 1.0,
            epinet_task: 0,
            control_weights: vec![1.0, 0.0, 0.0, 0.0],
            per_example_index: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    EpinetTs,
    GreedyPoint,
    EpsilonGreedy,
    EnsembleTs,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::EpinetTs => "epinet_ts",
            Policy::GreedyPoint => "greedy_point",
            Policy::EpsilonGreedy => "epsilon_greedy",
            Policy::EnsembleTs => "ensemble_ts",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "epinet_ts" => Some(Policy::EpinetTs),
            "greedy_point" => Some(Policy::GreedyPoint),
            "epsilon_greedy" => Some(Policy::EpsilonGreedy),
            "ensemble_ts" => Some(Policy::EnsembleTs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerChoice {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub treatment: Policy,
    pub control: Policy,
    pub optimizer: OptimizerChoice,
    pub learning_rate: f64,
    /// Decoupled weight decay of the Adam optimizer; ignored by SGD.
    pub weight_decay: f64,
    pub batch_size: usize,
    /// 0 disables training.
    pub train_every: u64,
    pub buffer_capacity: usize,
    pub epsilon: f64,
    pub ensemble_size: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            treatment: Policy::EpinetTs,
            control: Policy::GreedyPoint,
            optimizer: OptimizerChoice::Adam,
            learning_rate: 0.01,
            weight_decay: 0.1,
            batch_size: 32,
            train_every: 1,
            buffer_capacity: 4096,
            epsilon: 0.1,
            ensemble_size: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    pub write_logs: bool,
    /// Impression-count cut points of the metric buckets.
    pub buckets: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            horizon: 5000,
            seeds: (0..20).collect(),
            output_dir: String::from("runs/default"),
            write_logs: true,
            buckets: vec![0, 100, 200, 400, 1000, 2000, 3000, 4000, 5000, 10000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub model: ModelConfig,
    pub agent: AgentConfig,
    pub run: RunConfig,
}

impl ExperimentConfig {
    /// Architecture sizes used in production: d = 128, d_z = 5 and
    /// [384, 256] hidden layers for both overarch networks.
    pub fn paper_preset() -> Self {
        let mut c = Self::default();
        c.apply_paper_preset();
        c
    }

    pub fn apply_paper_preset(&mut self) {
        self.model.embed_dim = 128;
        self.model.index_dim = 5;
        self.model.base_hidden = vec![384, 256];
        self.model.epinet_hidden = vec![384, 256];
    }

    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            user_features: self.env.user_features,
            item_features: self.env.item_features,
            embed_dim: self.model.embed_dim,
            num_tasks: self.model.num_tasks,
            tower_hidden: self.model.tower_hidden.clone(),
            base_hidden: self.model.base_hidden.clone(),
            epinet_hidden: self.model.epinet_hidden.clone(),
            index_dim: self.model.index_dim,
            prior_scale: self.model.prior_scale,
        }
    }

    pub fn agent_kind(&self, policy: Policy) -> AgentKind {
        match policy {
            Policy::EpinetTs => AgentKind::EpinetTs,
            Policy::GreedyPoint => AgentKind::GreedyPoint,
            Policy::EpsilonGreedy => AgentKind::EpsilonGreedy(self.agent.epsilon),
            Policy::EnsembleTs => AgentKind::EnsembleTs(self.agent.ensemble_size),
        }
    }

    pub fn optimizer(&self) -> Optimizer {
        match self.agent.optimizer {
            OptimizerChoice::Sgd => Optimizer::sgd(self.agent.learning_rate),
            OptimizerChoice::Adam => Optimizer::adamw(self.agent.learning_rate, self.agent.weight_decay),
        }
    }

    pub fn agent_spec(&self, policy: Policy) -> AgentSpec {
        AgentSpec {
            kind: self.agent_kind(policy),
            slate_size: self.env.slate_size,
            shape: self.model_shape(),
            epinet_task: self.model.epinet_task,
            score_weights: self.model.control_weights.clone(),
            optimizer: self.optimizer(),
            batch_size: self.agent.batch_size,
            train_every: self.agent.train_every,
            buffer_capacity: self.agent.buffer_capacity,
            per_example_index: self.model.per_example_index,
        }
    }

    /// Every violated constraint across all sections.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.env.violations();
        let m = &self.model;
        if m.embed_dim == 0 {
            v.push(format!("model.embed_dim must be at least 1"));
        }
        if m.num_tasks != NUM_LABELS {
            v.push(format!(
                "model.num_tasks must be {NUM_LABELS} (ws, like, share, vvs), got {}",
                m.num_tasks
            ));
        }
        if m.index_dim == 0 {
            v.push(format!("model.index_dim must be at least 1"));
        }
        for (key, dims) in [
            ("model.tower_hidden", &m.tower_hidden),
            ("model.base_hidden", &m.base_hidden),
            ("model.epinet_hidden", &m.epinet_hidden),
        ] {
            if dims.iter().any(|&d| d == 0) {
                v.push(format!("{key} entries must be positive"));
            }
        }
        if !(m.prior_scale >= 0.0 && m.prior_scale.is_finite()) {
            v.push(format!("model.prior_scale must be finite and non-negative"));
        }
        if m.epinet_task >= NUM_LABELS {
            v.push(format!("model.epinet_task must be below {NUM_LABELS}"));
        }
        if m.control_weights.len() != m.num_tasks {
            v.push(format!(
                "model.control_weights needs {} entries, got {}",
                m.num_tasks,
                m.control_weights.len()
            ));
        }
        let a = &self.agent;
        if !(a.learning_rate >= 0.0 && a.learning_rate.is_finite()) {
            v.push(format!("agent.learning_rate must be finite and non-negative"));
        }
        if !(a.weight_decay >= 0.0 && a.weight_decay.is_finite()) {
            v.push(format!("agent.weight_decay must be finite and non-negative"));
        }
        if a.batch_size == 0 {
            v.push(format!("agent.batch_size must be at least 1"));
        }
        if a.buffer_capacity == 0 {
            v.push(format!("agent.buffer_capacity must be at least 1"));
        }
        if !(0.0..=1.0).contains(&a.epsilon) {
            v.push(format!("agent.epsilon must lie in [0, 1]"));
        }
        if a.ensemble_size == 0 {
            v.push(format!("agent.ensemble_size must be at least 1"));
        }
        let r = &self.run;
        if r.buckets.len() < 2 || r.buckets.windows(2).any(|w| w[0] >= w[1]) {
            v.push(format!("run.buckets must be strictly increasing with at least two cut points"));
        }
        if r.buckets.first().is_some_and(|&b| b != 0) {
            v.push(format!("run.buckets must start at 0"));
        }
        let mut seeds = r.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            v.push(format!("run.seeds must be distinct"));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(ExperimentConfig::default().violations().is_empty());
        assert!(ExperimentConfig::paper_preset().violations().is_empty());
    }

    #[test]
    fn every_violation_is_reported() {
        let mut c = ExperimentConfig::default();
        c.model.embed_dim = 0;
        c.agent.batch_size = 0;
        c.run.buckets = vec![0, 10, 5];
        c.env.slate_size = 0;
        assert_eq!(c.violations().len(), 4, "{:?}", c.violations());
    }
}
