//! Action-selection policies that close the bandit loop.
//!
//! * `epinet_ts`: draw one epistemic index per step, score every live item
//!   under it, propose the top `M` (approximate Thompson sampling).
//! * `greedy_point`: top `M` under the point-estimate control model.
//! * `epsilon_greedy`: each slot is uniform over the remaining items with
//!   probability ε, greedy otherwise.
//! * `ensemble_ts`: draw one particle of an ensemble of point models.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::env::{Action, Interaction, ItemId, ItemPool, UserContext, NUM_LABELS};
use crate::error::{config_err, Error, Result};
use crate::model::{Batch, EpinetModel, ModelShape, PointModel};
use crate::nn::Optimizer;
use crate::params::NamedParams;
use crate::rng::Rng;
use crate::tensor::Tensor2;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentKind {
    EpinetTs,
    GreedyPoint,
    EpsilonGreedy(f64),
    EnsembleTs(usize),
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::EpinetTs => "epinet_ts",
            AgentKind::GreedyPoint => "greedy_point",
            AgentKind::EpsilonGreedy(_) => "epsilon_greedy",
            AgentKind::EnsembleTs(_) => "ensemble_ts",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AgentKind::EpsilonGreedy(eps) if !(0.0..=1.0).contains(&eps) => {
                Err(config_err!("epsilon must lie in [0, 1], got {eps}"))
            }
            AgentKind::EnsembleTs(0) => Err(config_err!("an ensemble needs at least one particle")),
            _ => Ok(()),
        }
    }
}

/// Everything needed to build (or rebuild) an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub kind: AgentKind,
    /// Items proposed per step (`M`).
    pub slate_size: usize,
    pub shape: ModelShape,
    /// Label the epinet overarch is trained on.
    pub epinet_task: usize,
    /// Per-task weights of the point-estimate score.
    pub score_weights: Vec<f64>,
    pub optimizer: Optimizer,
    pub batch_size: usize,
    /// Train after every `train_every` steps; 0 never trains.
    pub train_every: u64,
    pub buffer_capacity: usize,
    /// Draw one index per training example instead of one per minibatch.
    pub per_example_index: bool,
}

impl AgentSpec {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        self.shape.validate()?;
        if self.slate_size == 0 {
            return Err(config_err!("slate size must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(config_err!("batch size must be at least 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(config_err!("replay buffer capacity must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentModel {
    Epinet(EpinetModel),
    Point(PointModel),
    Ensemble(Vec<PointModel>),
}

impl NamedParams for AgentModel {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        match self {
            AgentModel::Epinet(m) => m.visit_params(f),
            AgentModel::Point(m) => m.visit_params(f),
            AgentModel::Ensemble(ms) => {
                for (i, m) in ms.iter().enumerate() {
                    crate::params::visit_prefixed(&format!("particle{}", i + 1), m, f);
                }
            }
        }
    }

    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        match self {
            AgentModel::Epinet(m) => m.assign_param(name, value),
            AgentModel::Point(m) => m.assign_param(name, value),
            AgentModel::Ensemble(ms) => {
                let (head, rest) = crate::params::split_prefix(name)?;
                let idx: usize = head
                    .strip_prefix("particle")
                    .and_then(|s| s.parse().ok())
                    .filter(|i| (1..=ms.len()).contains(i))
                    .ok_or_else(|| config_err!("unknown ensemble particle `{head}`"))?;
                ms[idx - 1].assign_param(rest, value)
            }
        }
    }
}

/// One stored training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub user: Vec<f64>,
    pub item: Vec<f64>,
    pub labels: [f64; NUM_LABELS],
}

/// Bounded FIFO of recent transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample_batch(&self, n: usize, rng: &mut Rng) -> Option<Batch> {
        if self.items.is_empty() {
            return None;
        }
        let picks: Vec<&Transition> = (0..n).map(|_| &self.items[rng.below(self.items.len())]).collect();
        let uf = picks[0].user.len();
        let itf = picks[0].item.len();
        let mut users = Vec::with_capacity(n * uf);
        let mut items = Vec::with_capacity(n * itf);
        let mut labels = Vec::with_capacity(n * NUM_LABELS);
        for t in &picks {
            users.extend_from_slice(&t.user);
            items.extend_from_slice(&t.item);
            labels.extend_from_slice(&t.labels);
        }
        Some(Batch {
            users: Tensor2::from_vec(n, uf, users).ok()?,
            items: Tensor2::from_vec(n, itf, items).ok()?,
            labels: Tensor2::from_vec(n, NUM_LABELS, labels).ok()?,
        })
    }
}

/// Serializable agent parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSnapshot {
    pub version: u32,
    pub kind: AgentKind,
    pub step: u64,
    pub params: Vec<(String, Tensor2)>,
}

#[derive(Debug, Clone)]
pub struct Agent {
    spec: AgentSpec,
    model: AgentModel,
    buffer: ReplayBuffer,
    step: u64,
    act_rng: Rng,
    index_rng: Rng,
    train_rng: Rng,
}

/// Indices of the `m` highest scores; ties go to the lower item id.
pub fn top_m(scores: &[f64], ids: &[ItemId], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(&ids[b])));
    order.truncate(m);
    order
}

impl Agent {
    /// Fresh agent. Model initialisation draws from streams derived from
    /// `seed`, so a treatment and a control built from the same seed start
    /// from identical towers.
    pub fn new(spec: AgentSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut init = Rng::stream(seed, "init.towers");
        let model = match spec.kind {
            AgentKind::EpinetTs => {
                let mut prior_init = Rng::stream(seed, "init.prior");
                AgentModel::Epinet(EpinetModel::new(&spec.shape, spec.epinet_task, &mut init, &mut prior_init)?)
            }
            AgentKind::GreedyPoint | AgentKind::EpsilonGreedy(_) => {
                AgentModel::Point(PointModel::new(&spec.shape, spec.score_weights.clone(), &mut init)?)
            }
            AgentKind::EnsembleTs(n) => AgentModel::Ensemble(
                (1..=n)
                    .map(|p| {
                        let mut r = Rng::stream(seed, &format!("init.particle{p}"));
                        PointModel::new(&spec.shape, spec.score_weights.clone(), &mut r)
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        Self::from_model(spec, model, seed)
    }

    /// Agent around an explicitly built model.
    pub fn from_model(spec: AgentSpec, model: AgentModel, seed: u64) -> Result<Self> {
        spec.validate()?;
        let matches = matches!(
            (&spec.kind, &model),
            (AgentKind::EpinetTs, AgentModel::Epinet(_))
                | (AgentKind::GreedyPoint | AgentKind::EpsilonGreedy(_), AgentModel::Point(_))
                | (AgentKind::EnsembleTs(_), AgentModel::Ensemble(_))
        );
        if !matches {
            return Err(config_err!("model does not fit agent kind {}", spec.kind.name()));
        }
        if let (AgentKind::EnsembleTs(n), AgentModel::Ensemble(ms)) = (&spec.kind, &model) {
            if *n != ms.len() {
                return Err(config_err!("ensemble of {} particles for kind with {n}", ms.len()));
            }
        }
        Ok(Self {
            buffer: ReplayBuffer::new(spec.buffer_capacity),
            spec,
            model,
            step: 0,
            act_rng: Rng::stream(seed, "agent.act"),
            index_rng: Rng::stream(seed, "agent.index"),
            train_rng: Rng::stream(seed, "agent.train"),
        })
    }

    fn skeleton(spec: &AgentSpec) -> Result<AgentModel> {
        Ok(match spec.kind {
            AgentKind::EpinetTs => AgentModel::Epinet(EpinetModel::zeros(&spec.shape, spec.epinet_task)?),
            AgentKind::GreedyPoint | AgentKind::EpsilonGreedy(_) => {
                AgentModel::Point(PointModel::zeros(&spec.shape, spec.score_weights.clone())?)
            }
            AgentKind::EnsembleTs(n) => AgentModel::Ensemble(
                (0..n)
                    .map(|_| PointModel::zeros(&spec.shape, spec.score_weights.clone()))
                    .collect::<Result<_>>()?,
            ),
        })
    }

    pub fn spec(&self) -> &AgentSpec {
        &self.spec
    }

    pub fn kind(&self) -> AgentKind {
        self.spec.kind
    }

    pub fn model(&self) -> &AgentModel {
        &self.model
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Reset every random stream to those derived from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.act_rng = Rng::stream(seed, "agent.act");
        self.index_rng = Rng::stream(seed, "agent.index");
        self.train_rng = Rng::stream(seed, "agent.train");
    }

    fn sample_index(rng: &mut Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.normal()).collect()
    }

    /// Scores of every live item under the policy's sampled hypothesis
    /// (or the point estimate), in pool order.
    fn scores(&mut self, user: &Tensor2, items: &Tensor2) -> Result<Vec<f64>> {
        match &self.model {
            AgentModel::Epinet(m) => {
                let z = Self::sample_index(&mut self.act_rng, m.index_dim());
                m.score_items(user, items, &z)
            }
            AgentModel::Point(m) => m.score_items(user, items),
            AgentModel::Ensemble(ms) => {
                let p = self.act_rng.below(ms.len());
                ms[p].score_items(user, items)
            }
        }
    }

    pub fn act(&mut self, user: &UserContext, pool: &ItemPool) -> Result<Action> {
        let m = self.spec.slate_size;
        if pool.len() < m {
            return Err(Error::Environment(format!(
                "pool holds {} live items, slate needs {m}",
                pool.len()
            )));
        }
        let ids = pool.ids();
        let user_t = Tensor2::row_vector(user.features.clone());
        let items = pool.feature_matrix();
        let scores = self.scores(&user_t, &items)?;
        let chosen = match self.spec.kind {
            AgentKind::EpsilonGreedy(eps) => {
                let greedy = top_m(&scores, &ids, ids.len());
                let mut taken = BTreeSet::new();
                let mut picks = Vec::with_capacity(m);
                for _ in 0..m {
                    let pick = if self.act_rng.bernoulli(eps) {
                        let remaining: Vec<usize> = (0..ids.len()).filter(|i| !taken.contains(i)).collect();
                        remaining[self.act_rng.below(remaining.len())]
                    } else {
                        *greedy.iter().find(|i| !taken.contains(*i)).expect("pool larger than slate")
                    };
                    taken.insert(pick);
                    picks.push(pick);
                }
                picks
            }
            _ => top_m(&scores, &ids, m),
        };
        Ok(Action {
            item_ids: chosen.into_iter().map(|i| ids[i]).collect(),
        })
    }

    /// Store the step's interactions and, on schedule, take one optimizer
    /// step on a minibatch drawn from the replay buffer.
    pub fn observe_and_update(&mut self, interactions: &[Interaction]) -> Result<()> {
        for it in interactions {
            self.buffer.push(Transition {
                user: it.user_features.clone(),
                item: it.item_features.clone(),
                labels: it.labels,
            });
        }
        self.step += 1;
        if self.spec.train_every == 0 || self.step % self.spec.train_every != 0 {
            return Ok(());
        }
        self.train_once().map(|_| ())
    }

    /// One optimizer step; returns the minibatch loss (None when the buffer is empty).
    pub fn train_once(&mut self) -> Result<Option<f64>> {
        let bs = self.spec.batch_size;
        let opt = self.spec.optimizer;
        match &mut self.model {
            AgentModel::Epinet(m) => {
                let Some(batch) = self.buffer.sample_batch(bs, &mut self.train_rng) else {
                    return Ok(None);
                };
                let rows = if self.spec.per_example_index { bs } else { 1 };
                let dz = m.index_dim();
                let z = Tensor2::from_fn(rows, dz, |_, _| self.index_rng.normal());
                Ok(Some(m.train_step(&batch, &z, &opt)?.total()))
            }
            AgentModel::Point(m) => {
                let Some(batch) = self.buffer.sample_batch(bs, &mut self.train_rng) else {
                    return Ok(None);
                };
                Ok(Some(m.train_step(&batch, &opt)?))
            }
            AgentModel::Ensemble(ms) => {
                let mut total = 0.0;
                for p in ms.iter_mut() {
                    let Some(batch) = self.buffer.sample_batch(bs, &mut self.train_rng) else {
                        return Ok(None);
                    };
                    total += p.train_step(&batch, &opt)?;
                }
                Ok(Some(total / ms.len() as f64))
            }
        }
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        let mut params = Vec::new();
        self.model
            .visit_params(&mut |name, t| params.push((name.to_string(), t.clone())));
        AgentSnapshot {
            version: SNAPSHOT_VERSION,
            kind: self.spec.kind,
            step: self.step,
            params,
        }
    }

    /// Rebuild an agent from a snapshot. Every parameter of the skeleton
    /// must be supplied exactly once; nothing is returned on failure.
    pub fn restore(spec: AgentSpec, snapshot: &AgentSnapshot, seed: u64) -> Result<Self> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::State(format!(
                "snapshot version {} is not supported (expected {SNAPSHOT_VERSION})",
                snapshot.version
            )));
        }
        if snapshot.kind != spec.kind {
            return Err(config_err!(
                "snapshot holds a {} agent, spec asks for {}",
                snapshot.kind.name(),
                spec.kind.name()
            ));
        }
        let mut model = Self::skeleton(&spec)?;
        let mut expected = BTreeSet::new();
        model.visit_params(&mut |name, _| {
            expected.insert(name.to_string());
        });
        let mut seen = BTreeSet::new();
        for (name, value) in &snapshot.params {
            if !seen.insert(name.clone()) {
                return Err(config_err!("parameter `{name}` appears twice in snapshot"));
            }
            model.assign_param(name, value)?;
        }
        if seen != expected {
            let missing: Vec<_> = expected.difference(&seen).cloned().collect();
            return Err(config_err!("snapshot is missing parameters {missing:?}"));
        }
        let mut agent = Self::from_model(spec, model, seed)?;
        agent.step = snapshot.step;
        Ok(agent)
    }
}

