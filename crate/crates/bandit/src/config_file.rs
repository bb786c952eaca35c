//! Flat `key = value` configuration files.
//!
//! Keys are dotted (`env.num_items = 500`); the syntax is TOML, so strings
//! are quoted and lists use brackets. Unknown keys are errors, and every
//! problem in a file is reported at once.

use epinet_core::config::{ExperimentConfig, OptimizerChoice, Policy};
use sha2::{Digest, Sha256};
use toml::Value;

use crate::error::{HarnessError, Result};

type Getter = fn(&ExperimentConfig) -> Value;
type Setter = fn(&mut ExperimentConfig, &Value) -> std::result::Result<(), String>;

pub struct Key {
    pub name: &'static str,
    pub doc: &'static str,
    get: Getter,
    set: Setter,
}

fn int(v: &Value) -> std::result::Result<u64, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(format!("expected a non-negative integer, got {v}")),
    }
}

fn count(v: &Value) -> std::result::Result<usize, String> {
    int(v).map(|i| i as usize)
}

fn real(v: &Value) -> std::result::Result<f64, String> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(format!("expected a number, got {v}")),
    }
}

fn flag(v: &Value) -> std::result::Result<bool, String> {
    v.as_bool().ok_or_else(|| format!("expected true or false, got {v}"))
}

fn text(v: &Value) -> std::result::Result<String, String> {
    v.as_str()
        .map(str::to_owned)
        .ok_or_else(|| format!("expected a quoted string, got {v}"))
}

fn list<T>(v: &Value, item: fn(&Value) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    v.as_array()
        .ok_or_else(|| format!("expected a list, got {v}"))?
        .iter()
        .map(item)
        .collect()
}

fn counts(v: &Value) -> std::result::Result<Vec<usize>, String> {
    list(v, count)
}

fn ints(v: &Value) -> std::result::Result<Vec<u64>, String> {
    list(v, int)
}

fn reals(v: &Value) -> std::result::Result<Vec<f64>, String> {
    list(v, real)
}

fn weights(v: &Value) -> std::result::Result<[f64; 4], String> {
    let w = reals(v)?;
    w.as_slice()
        .try_into()
        .map_err(|_| format!("expected 4 weights (ws, like, share, vvs), got {}", w.len()))
}

fn policy(v: &Value) -> std::result::Result<Policy, String> {
    let s = text(v)?;
    Policy::parse(&s).ok_or_else(|| {
        format!("unknown policy `{s}` (epinet_ts, greedy_point, epsilon_greedy, ensemble_ts)")
    })
}

fn optimizer(v: &Value) -> std::result::Result<OptimizerChoice, String> {
    match text(v)?.as_str() {
        "sgd" => Ok(OptimizerChoice::Sgd),
        "adam" => Ok(OptimizerChoice::Adam),
        s => Err(format!("unknown optimizer `{s}` (sgd, adam)")),
    }
}

fn v_int(x: &u64) -> Value {
    Value::Integer(*x as i64)
}
fn v_count(x: &usize) -> Value {
    Value::Integer(*x as i64)
}
fn v_real(x: &f64) -> Value {
    Value::Float(*x)
}
fn v_flag(x: &bool) -> Value {
    Value::Boolean(*x)
}
fn v_text(x: &String) -> Value {
    Value::String(x.clone())
}
fn v_counts(x: &Vec<usize>) -> Value {
    Value::Array(x.iter().map(v_count).collect())
}
fn v_ints(x: &Vec<u64>) -> Value {
    Value::Array(x.iter().map(v_int).collect())
}
fn v_reals(x: &[f64]) -> Value {
    Value::Array(x.iter().map(v_real).collect())
}
fn v_weights(x: &[f64; 4]) -> Value {
    v_reals(x)
}
fn v_policy(x: &Policy) -> Value {
    Value::String(x.name().into())
}
fn v_optimizer(x: &OptimizerChoice) -> Value {
    Value::String(
        match x {
            OptimizerChoice::Sgd => "sgd",
            OptimizerChoice::Adam => "adam",
        }
        .into(),
    )
}

macro_rules! key {
    ($name:literal, $doc:literal, $c:ident => $field:expr, $parse:ident, $show:ident) => {
        Key {
            name: $name,
            doc: $doc,
            get: |$c: &ExperimentConfig| $show(&$field),
            set: |$c: &mut ExperimentConfig, v: &Value| {
                $field = $parse(v)?;
                Ok(())
            },
        }
    };
}

/// Every recognised key, in canonical order.
pub fn keys() -> &'static [Key] {
    static KEYS: &[Key] = &[
        key!("env.num_items", "live items in the pool", c => c.env.num_items, count, v_count),
        key!("env.slate_size", "items proposed per step (M)", c => c.env.slate_size, count, v_count),
        key!("env.impression_cap", "impressions at which an item retires; 0 disables", c => c.env.impression_cap, int, v_int),
        key!("env.max_age", "steps after which an item retires; 0 disables", c => c.env.max_age, int, v_int),
        key!("env.refresh_per_step", "oldest items replaced by fresh ones every step", c => c.env.refresh_per_step, count, v_count),
        key!("env.cold_threshold", "impressions below which an item is cold", c => c.env.cold_threshold, int, v_int),
        key!("env.min_cold_fraction", "minimum fraction of cold live items", c => c.env.min_cold_fraction, real, v_real),
        key!("env.num_users", "size of the user population", c => c.env.num_users, count, v_count),
        key!("env.user_features", "raw user feature width", c => c.env.user_features, count, v_count),
        key!("env.item_features", "raw item feature width", c => c.env.item_features, count, v_count),
        key!("env.latent_dim", "hidden preference dimension", c => c.env.latent_dim, count, v_count),
        key!("env.engagement_features", "append observed engagement to item features", c => c.env.engagement_features, flag, v_flag),
        key!("env.engagement_prior_count", "pseudo-impressions of the engagement smoothing", c => c.env.engagement_prior_count, real, v_real),
        key!("env.engagement_prior_rate", "engagement rate reported before any impression", c => c.env.engagement_prior_rate, real, v_real),
        key!("env.feature_noise", "noise on the raw feature projections", c => c.env.feature_noise, real, v_real),
        key!("env.video_lengths", "video lengths in seconds, sampled uniformly", c => c.env.video_lengths, reals, v_reals),
        key!("env.reward_weights", "reward weights on (ws, like, share, vvs)", c => c.env.reward_weights, weights, v_weights),
        key!("env.like_rate_target", "marginal like rate targeted by calibrate", c => c.env.like_rate_target, real, v_real),
        key!("env.share_rate_target", "marginal share rate targeted by calibrate", c => c.env.share_rate_target, real, v_real),
        key!("env.truth.affinity_scale", "weight of the latent user-item match", c => c.env.truth.affinity_scale, real, v_real),
        key!("env.truth.quality_std", "spread of hidden per-item quality", c => c.env.truth.quality_std, real, v_real),
        key!("env.truth.like_slope", "like logit per unit affinity", c => c.env.truth.like_slope, real, v_real),
        key!("env.truth.like_bias", "like logit offset", c => c.env.truth.like_bias, real, v_real),
        key!("env.truth.share_slope", "share logit per unit affinity", c => c.env.truth.share_slope, real, v_real),
        key!("env.truth.share_bias", "share logit offset", c => c.env.truth.share_bias, real, v_real),
        key!("env.truth.watch_log_mean", "log watch seconds at zero affinity", c => c.env.truth.watch_log_mean, real, v_real),
        key!("env.truth.watch_slope", "log watch seconds per unit affinity", c => c.env.truth.watch_slope, real, v_real),
        key!("env.truth.watch_log_std", "spread of log watch seconds", c => c.env.truth.watch_log_std, real, v_real),
        key!("env.truth.max_loops", "most plays of one video in a view", c => c.env.truth.max_loops, int_u32, v_u32),
        key!("model.embed_dim", "embedding width d", c => c.model.embed_dim, count, v_count),
        key!("model.num_tasks", "labels per interaction K", c => c.model.num_tasks, count, v_count),
        key!("model.tower_hidden", "hidden widths of both towers", c => c.model.tower_hidden, counts, v_counts),
        key!("model.base_hidden", "hidden widths of the base overarch net", c => c.model.base_hidden, counts, v_counts),
        key!("model.epinet_hidden", "hidden widths of the learnable and prior nets", c => c.model.epinet_hidden, counts, v_counts),
        key!("model.index_dim", "epistemic index dimension d_z", c => c.model.index_dim, count, v_count),
        key!("model.prior_scale", "multiplier on the frozen prior net", c => c.model.prior_scale, real, v_real),
        key!("model.epinet_task", "label the overarch is trained on (0 ws, 1 like, 2 share, 3 vvs)", c => c.model.epinet_task, count, v_count),
        key!("model.control_weights", "control score weights on (ws, like, share, vvs)", c => c.model.control_weights, reals, v_reals_vec),
        key!("model.per_example_index", "one index per training example instead of per minibatch", c => c.model.per_example_index, flag, v_flag),
        key!("agent.treatment", "policy of the treatment arm", c => c.agent.treatment, policy, v_policy),
        key!("agent.control", "policy of the control arm", c => c.agent.control, policy, v_policy),
        key!("agent.optimizer", "sgd or adam", c => c.agent.optimizer, optimizer, v_optimizer),
        key!("agent.learning_rate", "optimizer step size", c => c.agent.learning_rate, real, v_real),
        key!("agent.weight_decay", "decoupled Adam weight decay", c => c.agent.weight_decay, real, v_real),
        key!("agent.batch_size", "minibatch size", c => c.agent.batch_size, count, v_count),
        key!("agent.train_every", "steps between updates; 0 never trains", c => c.agent.train_every, int, v_int),
        key!("agent.buffer_capacity", "replay buffer size", c => c.agent.buffer_capacity, count, v_count),
        key!("agent.epsilon", "exploration rate of epsilon_greedy", c => c.agent.epsilon, real, v_real),
        key!("agent.ensemble_size", "particles of ensemble_ts", c => c.agent.ensemble_size, count, v_count),
        key!("run.horizon", "steps per arm and seed", c => c.run.horizon, int, v_int),
        key!("run.seeds", "seed list", c => c.run.seeds, ints, v_ints),
        key!("run.output_dir", "run directory", c => c.run.output_dir, text, v_text),
        key!("run.write_logs", "write per-arm interaction logs", c => c.run.write_logs, flag, v_flag),
        key!("run.buckets", "impression-count bucket cut points", c => c.run.buckets, ints, v_ints),
    ];
    KEYS
}

fn int_u32(v: &Value) -> std::result::Result<u32, String> {
    u32::try_from(int(v)?).map_err(|_| format!("{v} is too large"))
}
fn v_u32(x: &u32) -> Value {
    Value::Integer(i64::from(*x))
}
fn v_reals_vec(x: &Vec<f64>) -> Value {
    v_reals(x)
}

pub fn find_key(name: &str) -> Option<&'static Key> {
    keys().iter().find(|k| k.name == name)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let full = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&full, t, out),
            _ => out.push((full, v.clone())),
        }
    }
}

fn apply(config: &mut ExperimentConfig, key: &str, value: &Value, errors: &mut Vec<String>) {
    match find_key(key) {
        None => errors.push(format!("unknown key `{key}` (see `epinet-bandit defaults`)")),
        Some(k) => {
            if let Err(e) = (k.set)(config, value) {
                errors.push(format!("{key}: {e}"));
            }
        }
    }
}

/// Apply the text of a configuration file on top of `base`.
pub fn apply_text(base: ExperimentConfig, text: &str) -> std::result::Result<ExperimentConfig, Vec<String>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| vec![e.message().to_string()])?;
    let mut pairs = Vec::new();
    flatten("", &table, &mut pairs);
    let mut config = base;
    let mut errors = Vec::new();
    for (k, v) in &pairs {
        apply(&mut config, k, v, &mut errors);
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(errors)
    }
}

/// Parse a `key=value` override; bare words are taken as strings.
pub fn parse_override(spec: &str) -> std::result::Result<(String, Value), String> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}` is not of the form key=value"))?;
    let (k, v) = (k.trim(), v.trim());
    let value = format!("x = {v}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| Value::String(v.to_string()));
    Ok((k.to_string(), value))
}

/// Where a configuration comes from, applied in field order.
#[derive(Debug, Clone, Default)]
pub struct ConfigSource {
    pub paper_preset: bool,
    pub file_text: Option<String>,
    pub overrides: Vec<String>,
}

/// Defaults, then the preset, then the file, then the overrides, then
/// validation. Every error from every stage is reported together.
pub fn load(source: &ConfigSource) -> Result<ExperimentConfig> {
    let mut config = if source.paper_preset {
        ExperimentConfig::paper_preset()
    } else {
        ExperimentConfig::default()
    };
    let mut errors = Vec::new();
    if let Some(text) = &source.file_text {
        match apply_text(config.clone(), text) {
            Ok(c) => config = c,
            Err(e) => errors.extend(e),
        }
    }
    for o in &source.overrides {
        match parse_override(o) {
            Ok((k, v)) => apply(&mut config, &k, &v, &mut errors),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        errors.extend(config.violations());
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(HarnessError::Config(errors))
    }
}

/// Canonical text of a configuration: every key, in registry order.
pub fn render(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    for k in keys() {
        out.push_str(k.name);
        out.push_str(" = ");
        out.push_str(&(k.get)(config).to_string());
        out.push('\n');
    }
    out
}

/// Keys with their defaults and descriptions.
pub fn describe_defaults() -> String {
    let config = ExperimentConfig::default();
    let mut out = String::new();
    for k in keys() {
        out.push_str(&format!("{} = {}    # {}\n", k.name, (k.get)(&config), k.doc));
    }
    out
}

/// SHA-256 of the canonical text, as lowercase hex.
pub fn fingerprint(config: &ExperimentConfig) -> String {
    hex(&Sha256::digest(render(config).as_bytes()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
