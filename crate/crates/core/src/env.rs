//! Non-stationary contextual-bandit simulator of cold-start content.
//!
//! Each step one user from a fixed population arrives, the agent proposes
//! `M` live items, and every proposed item yields four labels
//! (ws, like, share, vvs). Items age out of the pool when they reach the
//! impression cap or the age cap, and a few fresh items replace the oldest
//! ones every step, so the pool keeps turning over.
//!
//! Hidden truth: users and items carry latent vectors `u*`, `v*`; items also
//! carry a scalar quality. Their affinity
//! `a = affinity_scale · ⟨u*, v*⟩ / √L + quality` drives every label:
//!
//! * like, share ~ Bernoulli(sigmoid(slope · a + bias))
//! * raw watch time `W ~ LogNormal(watch_log_mean + watch_slope · a, watch_log_std)`,
//!   capped at `max_loops` plays of the video.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, Error, Result};
use crate::nn::sigmoid;
use crate::rng::Rng;
use crate::tensor::{dot, Tensor2};

pub const NUM_LABELS: usize = 4;
pub const WS: usize = 0;
pub const LIKE: usize = 1;
pub const SHARE: usize = 2;
pub const VVS: usize = 3;

/// Binary watch score of one view.
///
/// | video length | ws = 1 when |
/// |---|---|
/// | < 10 s | completed more than once |
/// | [10 s, 20 s) | completed |
/// | ≥ 20 s | watched at least 20 s |
pub fn watch_score(video_length: f64, watch_seconds: f64, completed_count: u32) -> f64 {
    let hit = if video_length < 10.0 {
        completed_count > 1
    } else if video_length < 20.0 {
        completed_count >= 1
    } else {
        watch_seconds >= 20.0
    };
    if hit {
        1.0
    } else {
        0.0
    }
}

/// Video-view-seconds label: `k/9` for `[10k, 10(k+1))` seconds, 1 from 90 s.
pub fn vvs(watch_seconds: f64) -> f64 {
    let k = libm::floor(watch_seconds / 10.0);
    let k = if k.is_nan() { 0.0 } else { k.clamp(0.0, 9.0) };
    k / 9.0
}

/// Watch time at which ws flips to 1 (assuming enough loops are allowed).
fn ws_threshold(video_length: f64) -> f64 {
    if video_length < 10.0 {
        2.0 * video_length
    } else if video_length < 20.0 {
        video_length
    } else {
        20.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u64);

/// What an agent may see of an item.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: ItemId,
    /// Raw features: latent projection, video length / 60 and, when
    /// engagement features are on, (smoothed reward rate, confidence).
    pub features: Vec<f64>,
    pub video_length: f64,
    pub birth_step: u64,
    pub impression_count: u64,
    /// Sum of realised rewards over all impressions so far.
    pub reward_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct ItemTruth {
    latent: Vec<f64>,
    quality: f64,
}

/// Live items ordered by id (oldest first).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ItemPool {
    live: Vec<Item>,
    retired_count: u64,
}

impl ItemPool {
    pub fn live(&self) -> &[Item] {
        &self.live
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn retired_count(&self) -> u64 {
        self.retired_count
    }

    pub fn position(&self, id: ItemId) -> Option<usize> {
        self.live.binary_search_by_key(&id, |it| it.id).ok()
    }

    pub fn get(&self, id: ItemId) -> Option<&Item> {
        self.position(id).map(|p| &self.live[p])
    }

    pub fn ids(&self) -> Vec<ItemId> {
        self.live.iter().map(|it| it.id).collect()
    }

    /// `N × F_i` feature matrix in pool order.
    pub fn feature_matrix(&self) -> Tensor2 {
        let cols = self.live.first().map_or(0, |it| it.features.len());
        let mut data = Vec::with_capacity(self.live.len() * cols);
        for it in &self.live {
            data.extend_from_slice(&it.features);
        }
        Tensor2::from_vec(self.live.len(), cols, data).expect("uniform feature width")
    }
}

/// Ordered slate of distinct live item ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub item_ids: Vec<ItemId>,
}

/// What an agent may see of a user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserContext {
    pub id: usize,
    pub features: Vec<f64>,
}

/// One served (user, item) pair and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub step: u64,
    pub user_id: usize,
    pub user_features: Vec<f64>,
    pub item_id: ItemId,
    pub item_features: Vec<f64>,
    /// Impressions the item had before this serve.
    pub impression_count: u64,
    /// (ws, like, share, vvs)
    pub labels: [f64; NUM_LABELS],
    pub watch_seconds: f64,
    pub video_length: f64,
    pub completed_count: u32,
}

impl Interaction {
    pub fn completed(&self) -> bool {
        self.completed_count >= 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub interactions: Vec<Interaction>,
    /// Expected reward of each served item, aligned with `interactions`.
    pub expected_rewards: Vec<f64>,
    /// Best achievable expected slate reward for the user that was served.
    pub oracle_value: f64,
    pub next_user: UserContext,
    pub retired: Vec<ItemId>,
    pub added: Vec<ItemId>,
}

impl StepOutcome {
    pub fn realized_reward(&self, weights: &[f64; NUM_LABELS]) -> f64 {
        self.interactions
            .iter()
            .map(|i| dot(&i.labels, weights))
            .sum()
    }

    pub fn expected_reward(&self) -> f64 {
        self.expected_rewards.iter().sum()
    }

    pub fn regret(&self) -> f64 {
        self.oracle_value - self.expected_reward()
    }
}

/// Parameters of the hidden engagement model.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthParams {
    pub affinity_scale: f64,
    pub quality_std: f64,
    pub like_slope: f64,
    pub like_bias: f64,
    pub share_slope: f64,
    pub share_bias: f64,
    pub watch_log_mean: f64,
    pub watch_slope: f64,
    pub watch_log_std: f64,
    pub max_loops: u32,
}

impl Default for TruthParams {
    fn default() -> Self {
        Self {
            affinity_scale: 1.0,
            quality_std: 2.0,
            like_slope: 1.0,
            // fitted by `calibrate` for a 1% marginal like rate
            like_bias: -6.78,
            share_slope: 1.0,
            // fitted for a 0.3% marginal share rate
            share_bias: -8.15,
            watch_log_mean: 2.0,
            watch_slope: 1.0,
            watch_log_std: 1.0,
            max_loops: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub num_items: usize,
    pub slate_size: usize,
    /// Items retire after this many impressions; 0 disables the cap.
    pub impression_cap: u64,
    /// Items retire after living this many steps; 0 disables the cap.
    pub max_age: u64,
    /// Fresh items replacing the oldest live ones every step.
    pub refresh_per_step: usize,
    /// Impressions below which an item counts as cold.
    pub cold_threshold: u64,
    /// The oldest warm items are replaced while fewer than this fraction of
    /// the pool is cold.
    pub min_cold_fraction: f64,
    pub num_users: usize,
    pub user_features: usize,
    pub item_features: usize,
    pub latent_dim: usize,
    /// Append the observed engagement statistics to item features.
    pub engagement_features: bool,
    /// Pseudo-impressions `κ` of the engagement smoothing.
    pub engagement_prior_count: f64,
    /// Rate a never-served item reports.
    pub engagement_prior_rate: f64,
    pub feature_noise: f64,
    pub video_lengths: Vec<f64>,
    pub truth: TruthParams,
    /// Weights on (ws, like, share, vvs).
    pub reward_weights: [f64; NUM_LABELS],
    /// Marginal like rate `calibrate` fits `like_bias` to.
    pub like_rate_target: f64,
    pub share_rate_target: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_items: 500,
            slate_size: 10,
            impression_cap: 10_000,
            max_age: 0,
            refresh_per_step: 2,
            cold_threshold: 100,
            min_cold_fraction: 0.2,
            num_users: 1000,
            user_features: 32,
            item_features: 35,
            latent_dim: 8,
            engagement_features: true,
            engagement_prior_count: 3.0,
            engagement_prior_rate: 0.25,
            feature_noise: 0.5,
            video_lengths: vec![5.0, 15.0, 30.0, 60.0, 90.0, 120.0],
            truth: TruthParams::default(),
            reward_weights: [1.0, 0.0, 0.0, 0.0],
            like_rate_target: 0.01,
            share_rate_target: 0.003,
        }
    }
}

impl EnvConfig {
    /// Every violated constraint, or empty.
    pub fn violations(&self) -> Vec<alloc::string::String> {
        let mut v = Vec::new();
        if self.slate_size == 0 {
            v.push(format!("env.slate_size must be at least 1"));
        }
        if self.num_items < self.slate_size {
            v.push(format!(
                "env.num_items ({}) must be at least env.slate_size ({})",
                self.num_items, self.slate_size
            ));
        }
        if self.refresh_per_step > self.num_items {
            v.push(format!("env.refresh_per_step exceeds env.num_items"));
        }
        if !(0.0..=1.0).contains(&self.min_cold_fraction) {
            v.push(format!("env.min_cold_fraction must lie in [0, 1]"));
        }
        if self.num_users == 0 {
            v.push(format!("env.num_users must be at least 1"));
        }
        if self.user_features == 0 {
            v.push(format!("env.user_features must be at least 1"));
        }
        if self.item_features < self.fixed_item_features() + 1 {
            v.push(format!(
                "env.item_features must be at least {} (projection, video length{})",
                self.fixed_item_features() + 1,
                if self.engagement_features { ", engagement" } else { "" }
            ));
        }
        if !(self.engagement_prior_count > 0.0 && self.engagement_prior_count.is_finite()) {
            v.push(format!("env.engagement_prior_count must be positive"));
        }
        if !(self.engagement_prior_rate >= 0.0 && self.engagement_prior_rate.is_finite()) {
            v.push(format!("env.engagement_prior_rate must be finite and non-negative"));
        }
        if self.latent_dim == 0 {
            v.push(format!("env.latent_dim must be at least 1"));
        }
        if !(self.feature_noise >= 0.0) {
            v.push(format!("env.feature_noise must be non-negative"));
        }
        if self.video_lengths.is_empty() || self.video_lengths.iter().any(|&l| !(l > 0.0)) {
            v.push(format!("env.video_lengths must be a non-empty list of positive lengths"));
        }
        if self.truth.max_loops < 2 {
            v.push(format!("env.truth.max_loops must be at least 2 so short videos can be rewatched"));
        }
        if !(self.truth.watch_log_std > 0.0) {
            v.push(format!("env.truth.watch_log_std must be positive"));
        }
        if !(self.truth.quality_std >= 0.0) {
            v.push(format!("env.truth.quality_std must be non-negative"));
        }
        for (key, t) in [("like", self.like_rate_target), ("share", self.share_rate_target)] {
            if !(t > 0.0 && t < 1.0) {
                v.push(format!("env.{key}_rate_target must lie in (0, 1)"));
            }
        }
        if self.reward_weights.iter().any(|&w| !(w >= 0.0)) {
            v.push(format!("env.reward_weights must be non-negative"));
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

    /// Item feature columns that are not latent projections.
    pub fn fixed_item_features(&self) -> usize {
        if self.engagement_features {
            3
        } else {
            1
        }
    }

    /// `(smoothed rate, confidence)` after `n` impressions with reward sum `s`.
    pub fn engagement_stats(&self, n: u64, s: f64) -> [f64; 2] {
        let k = self.engagement_prior_count;
        let n = n as f64;
        [(s + k * self.engagement_prior_rate) / (n + k), n / (n + k)]
    }
}

/// Hand-specified item for fixed-pool scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemSpec {
    pub quality: f64,
    pub video_length: f64,
    /// Hidden preference vector; drawn at random when `None`.
    pub latent: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Users {
    latent: Vec<Vec<f64>>,
    features: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvConfig,
    item_projection: Tensor2,
    users: Users,
    truth: BTreeMap<ItemId, ItemTruth>,
    pool: ItemPool,
    next_id: u64,
    step: u64,
    current_user: usize,
    item_rng: Rng,
    user_rng: Rng,
    outcome_rng: Rng,
}

fn project(projection: &Tensor2, latent: &[f64], noise: f64, rng: &mut Rng) -> Vec<f64> {
    (0..projection.rows())
        .map(|r| dot(projection.row(r), latent) + noise * rng.normal())
        .collect()
}

impl Environment {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut env = Self::skeleton(config, seed);
        for _ in 0..env.config.num_items {
            env.spawn_random();
        }
        Ok(env)
    }

    /// Environment whose initial pool is exactly `items`.
    pub fn with_items(config: EnvConfig, seed: u64, items: &[ItemSpec]) -> Result<Self> {
        config.validate()?;
        if items.len() != config.num_items {
            return Err(config_err!(
                "{} item specs for a pool of {}",
                items.len(),
                config.num_items
            ));
        }
        let mut env = Self::skeleton(config, seed);
        for spec in items {
            let latent = match &spec.latent {
                Some(v) if v.len() == env.config.latent_dim => v.clone(),
                Some(v) => {
                    return Err(config_err!(
                        "item latent has {} entries, latent_dim is {}",
                        v.len(),
                        env.config.latent_dim
                    ))
                }
                None => (0..env.config.latent_dim).map(|_| env.item_rng.normal()).collect(),
            };
            if !(spec.video_length > 0.0) {
                return Err(config_err!("item video length must be positive"));
            }
            env.spawn(latent, spec.quality, spec.video_length);
        }
        Ok(env)
    }

    fn skeleton(config: EnvConfig, seed: u64) -> Self {
        let mut truth_rng = Rng::stream(seed, "env.truth");
        let l = config.latent_dim;
        let proj_scale = 1.0 / libm::sqrt(l as f64);
        let user_projection = Tensor2::from_fn(config.user_features, l, |_, _| proj_scale * truth_rng.normal());
        let item_projection =
            Tensor2::from_fn(config.item_features - config.fixed_item_features(), l, |_, _| proj_scale * truth_rng.normal());
        let mut latent = Vec::with_capacity(config.num_users);
        let mut features = Vec::with_capacity(config.num_users);
        for _ in 0..config.num_users {
            let u: Vec<f64> = (0..l).map(|_| truth_rng.normal()).collect();
            features.push(project(&user_projection, &u, config.feature_noise, &mut truth_rng));
            latent.push(u);
        }
        let mut user_rng = Rng::stream(seed, "env.users");
        let current_user = user_rng.below(config.num_users);
        Self {
            item_projection,
            users: Users { latent, features },
            truth: BTreeMap::new(),
            pool: ItemPool::default(),
            next_id: 0,
            step: 0,
            current_user,
            item_rng: Rng::stream(seed, "env.items"),
            user_rng,
            outcome_rng: Rng::stream(seed, "env.outcomes"),
            config,
        }
    }

    fn spawn_random(&mut self) {
        let latent: Vec<f64> = (0..self.config.latent_dim).map(|_| self.item_rng.normal()).collect();
        let quality = self.config.truth.quality_std * self.item_rng.normal();
        let lengths = &self.config.video_lengths;
        let video_length = lengths[self.item_rng.below(lengths.len())];
        self.spawn(latent, quality, video_length);
    }

    fn spawn(&mut self, latent: Vec<f64>, quality: f64, video_length: f64) -> ItemId {
        let mut features = project(&self.item_projection, &latent, self.config.feature_noise, &mut self.item_rng);
        features.push(video_length / 60.0);
        if self.config.engagement_features {
            features.extend(self.config.engagement_stats(0, 0.0));
        }
        let id = ItemId(self.next_id);
        self.next_id += 1;
        self.truth.insert(id, ItemTruth { latent, quality });
        self.pool.live.push(Item {
            id,
            features,
            video_length,
            birth_step: self.step,
            impression_count: 0,
            reward_sum: 0.0,
        });
        id
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn pool(&self) -> &ItemPool {
        &self.pool
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn current_user(&self) -> UserContext {
        self.user_context(self.current_user)
    }

    fn user_context(&self, id: usize) -> UserContext {
        UserContext {
            id,
            features: self.users.features[id].clone(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.latent.len()
    }

    fn affinity(&self, user: usize, truth: &ItemTruth) -> f64 {
        let l = self.config.latent_dim as f64;
        self.config.truth.affinity_scale * dot(&self.users.latent[user], &truth.latent) / libm::sqrt(l)
            + truth.quality
    }

    fn watch_log_mean(&self, affinity: f64) -> f64 {
        self.config.truth.watch_log_mean + self.config.truth.watch_slope * affinity
    }

    /// `P(W ≥ t)` for the raw log-normal watch time.
    fn watch_survival(&self, mu: f64, t: f64) -> f64 {
        let s = self.config.truth.watch_log_std;
        0.5 * libm::erfc((libm::log(t) - mu) / (s * core::f64::consts::SQRT_2))
    }

    fn expected_labels_for(&self, user: usize, id: ItemId) -> Result<[f64; NUM_LABELS]> {
        let truth = self
            .truth
            .get(&id)
            .ok_or_else(|| Error::Environment(format!("item {} is not live", id.0)))?;
        let item = self.pool.get(id).expect("truth and pool agree");
        let a = self.affinity(user, truth);
        let p = &self.config.truth;
        let mu = self.watch_log_mean(a);
        let len = item.video_length;
        let cap = f64::from(p.max_loops) * len;
        let ws = self.watch_survival(mu, ws_threshold(len));
        let vvs = (1..=9)
            .map(|k| 10.0 * k as f64)
            .filter(|&t| t <= cap)
            .map(|t| self.watch_survival(mu, t))
            .sum::<f64>()
            / 9.0;
        Ok([
            ws,
            sigmoid(p.like_slope * a + p.like_bias),
            sigmoid(p.share_slope * a + p.share_bias),
            vvs,
        ])
    }

    /// Exact expected labels of serving live item `id` to user `user`.
    pub fn expected_labels(&self, user: usize, id: ItemId) -> Result<[f64; NUM_LABELS]> {
        if user >= self.num_users() {
            return Err(Error::Environment(format!("unknown user {user}")));
        }
        self.expected_labels_for(user, id)
    }

    pub fn expected_reward(&self, user: usize, id: ItemId) -> Result<f64> {
        Ok(dot(&self.expected_labels(user, id)?, &self.config.reward_weights))
    }

    /// Expected reward of every live item for `user`, in pool order.
    pub fn expected_rewards(&self, user: usize) -> Result<Vec<f64>> {
        self.pool
            .live
            .iter()
            .map(|it| self.expected_reward(user, it.id))
            .collect()
    }

    /// Expected reward of the best slate of `M` live items for `user`.
    pub fn oracle_value(&self, user: usize) -> Result<f64> {
        let mut r = self.expected_rewards(user)?;
        r.sort_by(|a, b| b.total_cmp(a));
        Ok(r.iter().take(self.config.slate_size).sum())
    }

    pub fn action_expected_reward(&self, user: usize, action: &Action) -> Result<f64> {
        action
            .item_ids
            .iter()
            .map(|&id| self.expected_reward(user, id))
            .sum()
    }

    pub fn validate_action(&self, action: &Action) -> Result<()> {
        let m = self.config.slate_size;
        if action.item_ids.len() != m {
            return Err(Error::Environment(format!(
                "action proposes {} items, slate size is {m}",
                action.item_ids.len()
            )));
        }
        for (i, id) in action.item_ids.iter().enumerate() {
            if self.pool.position(*id).is_none() {
                return Err(Error::Environment(format!("item {} is not live", id.0)));
            }
            if action.item_ids[..i].contains(id) {
                return Err(Error::Environment(format!("item {} proposed twice", id.0)));
            }
        }
        Ok(())
    }

    /// Sample watch behaviour: (watch seconds, completed plays).
    fn sample_watch(&mut self, mu: f64, video_length: f64) -> (f64, u32) {
        let s = self.config.truth.watch_log_std;
        let raw = libm::exp(mu + s * self.outcome_rng.normal());
        let cap = f64::from(self.config.truth.max_loops) * video_length;
        let watch = raw.min(cap);
        let completed = (libm::floor(watch / video_length) as u32).min(self.config.truth.max_loops);
        (watch, completed)
    }

    /// Serve `action` to the current user and advance one step.
    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        self.validate_action(action)?;
        let user = self.current_user;
        let oracle_value = self.oracle_value(user)?;
        let user_features = self.users.features[user].clone();
        let weights = self.config.reward_weights;
        let mut interactions = Vec::with_capacity(action.item_ids.len());
        let mut expected_rewards = Vec::with_capacity(action.item_ids.len());
        for &id in &action.item_ids {
            expected_rewards.push(dot(&self.expected_labels_for(user, id)?, &weights));
            let a = self.affinity(user, &self.truth[&id]);
            let p = self.config.truth.clone();
            let pos = self.pool.position(id).expect("validated");
            let (video_length, features, impressions) = {
                let it = &self.pool.live[pos];
                (it.video_length, it.features.clone(), it.impression_count)
            };
            let (watch_seconds, completed_count) = self.sample_watch(self.watch_log_mean(a), video_length);
            let like = self.outcome_rng.bernoulli(sigmoid(p.like_slope * a + p.like_bias));
            let share = self.outcome_rng.bernoulli(sigmoid(p.share_slope * a + p.share_bias));
            let labels = [
                watch_score(video_length, watch_seconds, completed_count),
                f64::from(u8::from(like)),
                f64::from(u8::from(share)),
                vvs(watch_seconds),
            ];
            let item = &mut self.pool.live[pos];
            item.impression_count += 1;
            item.reward_sum += dot(&labels, &weights);
            if self.config.engagement_features {
                let stats = self.config.engagement_stats(item.impression_count, item.reward_sum);
                let f = item.features.len();
                item.features[f - 2..].copy_from_slice(&stats);
            }
            interactions.push(Interaction {
                step: self.step,
                user_id: user,
                user_features: user_features.clone(),
                item_id: id,
                item_features: features,
                impression_count: impressions,
                labels,
                watch_seconds,
                video_length,
                completed_count,
            });
        }
        self.step += 1;
        let (retired, added) = self.apply_lifecycle();
        self.current_user = self.user_rng.below(self.num_users());
        Ok(StepOutcome {
            interactions,
            expected_rewards,
            oracle_value,
            next_user: self.current_user(),
            retired,
            added,
        })
    }

    fn retire_where(&mut self, mut doomed: impl FnMut(&Item) -> bool, retired: &mut Vec<ItemId>) {
        let truth = &mut self.truth;
        let before = self.pool.live.len();
        self.pool.live.retain(|it| {
            if doomed(it) {
                truth.remove(&it.id);
                retired.push(it.id);
                false
            } else {
                true
            }
        });
        self.pool.retired_count += (before - self.pool.live.len()) as u64;
    }

    fn apply_lifecycle(&mut self) -> (Vec<ItemId>, Vec<ItemId>) {
        let cfg = self.config.clone();
        let now = self.step;
        let mut retired = Vec::new();
        self.retire_where(
            |it| {
                (cfg.impression_cap > 0 && it.impression_count >= cfg.impression_cap)
                    || (cfg.max_age > 0 && now - it.birth_step >= cfg.max_age)
            },
            &mut retired,
        );
        // replace the oldest items so fresh inventory keeps arriving
        let refresh = cfg.refresh_per_step.min(self.pool.live.len());
        if refresh > 0 {
            let cutoff = self.pool.live[refresh - 1].id;
            self.retire_where(|it| it.id <= cutoff, &mut retired);
        }
        let mut added = Vec::new();
        while self.pool.live.len() < cfg.num_items {
            self.spawn_random();
            added.push(self.pool.live.last().expect("just spawned").id);
        }
        let required = libm::ceil(cfg.min_cold_fraction * cfg.num_items as f64) as usize;
        loop {
            let cold = self
                .pool
                .live
                .iter()
                .filter(|it| it.impression_count < cfg.cold_threshold)
                .count();
            if cold >= required {
                break;
            }
            let Some(oldest_warm) = self
                .pool
                .live
                .iter()
                .find(|it| it.impression_count >= cfg.cold_threshold)
                .map(|it| it.id)
            else {
                break;
            };
            self.retire_where(|it| it.id == oldest_warm, &mut retired);
            self.spawn_random();
            added.push(self.pool.live.last().expect("just spawned").id);
        }
        (retired, added)
    }

    /// Uniformly random slate of distinct live items.
    pub fn random_action(&self, rng: &mut Rng) -> Action {
        let m = self.config.slate_size;
        let ids = self.pool.ids();
        let picked = rand::seq::index::sample(rng, ids.len(), m);
        Action {
            item_ids: picked.into_iter().map(|i| ids[i]).collect(),
        }
    }
}

/// Result of fitting the like and share biases.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub like_bias: f64,
    pub share_bias: f64,
    /// Marginal label rates measured over random serves: (ws, like, share, vvs).
    pub achieved: [f64; NUM_LABELS],
    pub serves: usize,
}

/// Fit `like_bias` and `share_bias` so that the marginal like and share
/// probabilities over random (user, item) pairs hit the targets, then
/// measure achieved label rates over `serves` random serves.
pub fn calibrate(
    mut config: EnvConfig,
    seed: u64,
    like_target: f64,
    share_target: f64,
    serves: usize,
) -> Result<CalibrationReport> {
    config.validate()?;
    let probe = Environment::new(config.clone(), seed)?;
    let mut rng = Rng::stream(seed, "calibrate.pairs");
    // affinities of random pairs; fresh items each draw
    let mut affinities = Vec::with_capacity(20_000);
    for _ in 0..20_000 {
        let user = rng.below(probe.num_users());
        let latent: Vec<f64> = (0..config.latent_dim).map(|_| rng.normal()).collect();
        let quality = config.truth.quality_std * rng.normal();
        affinities.push(probe.affinity(user, &ItemTruth { latent, quality }));
    }
    let fit = |slope: f64, target: f64| -> f64 {
        let rate = |b: f64| affinities.iter().map(|&a| sigmoid(slope * a + b)).sum::<f64>() / affinities.len() as f64;
        let (mut lo, mut hi) = (-30.0, 30.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rate(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    if !(0.0..1.0).contains(&like_target) || !(0.0..1.0).contains(&share_target) {
        return Err(config_err!("calibration targets must lie in (0, 1)"));
    }
    config.truth.like_bias = fit(config.truth.like_slope, like_target);
    config.truth.share_bias = fit(config.truth.share_slope, share_target);

    let mut env = Environment::new(config.clone(), seed)?;
    let mut pick = Rng::stream(seed, "calibrate.actions");
    let mut sums = [0.0; NUM_LABELS];
    let mut count = 0usize;
    while count < serves {
        let action = env.random_action(&mut pick);
        for it in env.step(&action)?.interactions {
            for (s, y) in sums.iter_mut().zip(it.labels) {
                *s += y;
            }
            count += 1;
        }
    }
    let n = count.max(1) as f64;
    Ok(CalibrationReport {
        like_bias: config.truth.like_bias,
        share_bias: config.truth.share_bias,
        achieved: sums.map(|s| s / n),
        serves: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ws_reference_cases() {
        assert_eq!(watch_score(8.0, 16.0, 2), 1.0);
        assert_eq!(watch_score(15.0, 15.0, 1), 1.0);
        assert_eq!(watch_score(60.0, 19.9, 0), 0.0);
        assert_eq!(watch_score(8.0, 8.0, 1), 0.0);
    }

    #[test]
    fn vvs_reference_cases() {
        assert_eq!(vvs(5.0), 0.0);
        assert_eq!(vvs(12.0), 1.0 / 9.0);
        assert_eq!(vvs(95.0), 1.0);
        assert_eq!(vvs(89.999), 8.0 / 9.0);
    }

    fn small() -> EnvConfig {
        EnvConfig {
            num_items: 30,
            slate_size: 3,
            num_users: 20,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn invalid_action_is_environment_error() {
        let mut env = Environment::new(small(), 1).unwrap();
        let ids = env.pool().ids();
        let dup = Action {
            item_ids: vec![ids[0], ids[0], ids[1]],
        };
        assert!(matches!(env.step(&dup), Err(Error::Environment(_))));
        let unknown = Action {
            item_ids: vec![ids[0], ids[1], ItemId(9999)],
        };
        assert!(matches!(env.step(&unknown), Err(Error::Environment(_))));
        let short = Action {
            item_ids: vec![ids[0]],
        };
        assert!(matches!(env.step(&short), Err(Error::Environment(_))));
    }

    #[test]
    fn violations_are_all_listed() {
        let cfg = EnvConfig {
            slate_size: 0,
            num_users: 0,
            latent_dim: 0,
            ..EnvConfig::default()
        };
        assert!(cfg.violations().len() >= 3);
    }
}
