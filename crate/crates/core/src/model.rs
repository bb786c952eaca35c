//! Two-tower retrieval model with an epinet overarch.
//!
//! The user tower maps user features to `K` task embeddings of width `d`;
//! the item tower maps item features to one embedding of width `d`. Task
//! logits are item·user_k dot products. The overarch consumes
//!
//! ```text
//! x = [user_1 … user_K | item | item ⊙ user_1 … item ⊙ user_K]   (dim d(2K+1))
//! ```
//!
//! through an [`EpinetHead`]. Overarch gradients stop at `x`: the towers are
//! trained by the embedding loss alone.

use alloc::vec;
use alloc::vec::Vec;

use crate::enn::{EpinetHead, EpinetShape};
use crate::error::{config_err, Error, Result};
use crate::nn::{bce_with_logit, sigmoid, DenseNet, Optimizer, ParameterStore};
use crate::params::{split_prefix, visit_prefixed, NamedParams};
use crate::rng::Rng;
use crate::tensor::{dot, Tensor2};

/// Labels are ordered (ws, like, share, vvs).
pub const TASK_NAMES: [&str; 4] = ["ws", "like", "share", "vvs"];

pub fn overarch_dim(embed_dim: usize, num_tasks: usize) -> usize {
    embed_dim * (2 * num_tasks + 1)
}

/// Overarch input for one (user, item) pair. `user_emb` holds the `K`
/// task embeddings back to back.
pub fn build_overarch_input(user_emb: &[f64], item_emb: &[f64], num_tasks: usize) -> Result<Vec<f64>> {
    let d = item_emb.len();
    if num_tasks == 0 || d == 0 || user_emb.len() != d * num_tasks {
        return Err(config_err!(
            "user embedding of length {} does not hold {} embeddings of width {}",
            user_emb.len(),
            num_tasks,
            d
        ));
    }
    let mut x = Vec::with_capacity(overarch_dim(d, num_tasks));
    write_overarch(user_emb, item_emb, &mut x);
    Ok(x)
}

fn write_overarch(user_emb: &[f64], item_emb: &[f64], out: &mut Vec<f64>) {
    out.extend_from_slice(user_emb);
    out.extend_from_slice(item_emb);
    for user_k in user_emb.chunks_exact(item_emb.len()) {
        out.extend(user_k.iter().zip(item_emb).map(|(u, i)| u * i));
    }
}

/// `logit_k = item · user_k`.
pub fn embedding_logits(user_emb: &[f64], item_emb: &[f64]) -> Vec<f64> {
    user_emb
        .chunks_exact(item_emb.len())
        .map(|user_k| dot(item_emb, user_k))
        .collect()
}

/// Architecture and index settings of the retrieval model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    pub user_features: usize,
    pub item_features: usize,
    pub embed_dim: usize,
    pub num_tasks: usize,
    pub tower_hidden: Vec<usize>,
    pub base_hidden: Vec<usize>,
    pub epinet_hidden: Vec<usize>,
    pub index_dim: usize,
    pub prior_scale: f64,
}

impl ModelShape {
    pub fn overarch_dim(&self) -> usize {
        overarch_dim(self.embed_dim, self.num_tasks)
    }

    pub fn epinet_shape(&self) -> EpinetShape {
        EpinetShape {
            input_dim: self.overarch_dim(),
            base_hidden: self.base_hidden.clone(),
            epinet_hidden: self.epinet_hidden.clone(),
            index_dim: self.index_dim,
        }
    }

    fn tower_dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend_from_slice(&self.tower_hidden);
        d.push(output);
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_tasks == 0 {
            return Err(config_err!("embedding width and task count must be positive"));
        }
        if self.user_features == 0 || self.item_features == 0 {
            return Err(config_err!("feature dimensions must be positive"));
        }
        Ok(())
    }
}

/// One minibatch of (user, item, labels) triples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub users: Tensor2,
    pub items: Tensor2,
    /// `B × K`, entries in [0, 1].
    pub labels: Tensor2,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.users.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.users.rows() == 0
    }
}

/// Batch-averaged loss split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub embedding: f64,
    pub epinet: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.embedding + self.epinet
    }
}

/// Which loss terms contribute gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossTerms {
    pub embedding: bool,
    pub epinet: bool,
}

impl LossTerms {
    pub const BOTH: LossTerms = LossTerms {
        embedding: true,
        epinet: true,
    };
    pub const EMBEDDING: LossTerms = LossTerms {
        embedding: true,
        epinet: false,
    };
    pub const EPINET: LossTerms = LossTerms {
        embedding: false,
        epinet: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTower {
    user: DenseNet,
    item: DenseNet,
    embed_dim: usize,
    num_tasks: usize,
}

impl TwoTower {
    pub fn new(shape: &ModelShape, rng: &mut Rng) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            user: DenseNet::new(&shape.tower_dims(shape.user_features, shape.embed_dim * shape.num_tasks), rng)?,
            item: DenseNet::new(&shape.tower_dims(shape.item_features, shape.embed_dim), rng)?,
            embed_dim: shape.embed_dim,
            num_tasks: shape.num_tasks,
        })
    }

    pub fn zeros(shape: &ModelShape) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            user: DenseNet::zeros(&shape.tower_dims(shape.user_features, shape.embed_dim * shape.num_tasks))?,
            item: DenseNet::zeros(&shape.tower_dims(shape.item_features, shape.embed_dim))?,
            embed_dim: shape.embed_dim,
            num_tasks: shape.num_tasks,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn user_tower(&self) -> &DenseNet {
        &self.user
    }

    pub fn item_tower(&self) -> &DenseNet {
        &self.item
    }

    /// `B × dK`: row `b` holds the `K` task embeddings of user `b`.
    pub fn user_embeddings(&self, users: &Tensor2) -> Result<Tensor2> {
        self.user.predict(users)
    }

    /// `N × d`.
    pub fn item_embeddings(&self, items: &Tensor2) -> Result<Tensor2> {
        self.item.predict(items)
    }

    pub fn trainable_stores_mut(&mut self) -> [&mut ParameterStore; 2] {
        [self.user.params_mut(), self.item.params_mut()]
    }

    fn overarch_batch(&self, user_emb: &Tensor2, item_emb: &Tensor2) -> Tensor2 {
        let n = item_emb.rows();
        let dim = overarch_dim(self.embed_dim, self.num_tasks);
        let mut data = Vec::with_capacity(n * dim);
        for r in 0..n {
            let u = if user_emb.rows() == 1 { user_emb.row(0) } else { user_emb.row(r) };
            write_overarch(u, item_emb.row(r), &mut data);
        }
        Tensor2::from_vec(n, dim, data).expect("overarch layout")
    }

    /// Forward both towers with caching, add the embedding-loss gradient
    /// if asked, and return (embedding loss, overarch inputs).
    fn embedding_pass(&mut self, batch: &Batch, backprop: bool) -> Result<(f64, Tensor2)> {
        let ue = self.user.forward(&batch.users)?;
        let ie = self.item.forward(&batch.items)?;
        let b = batch.len();
        let (d, k) = (self.embed_dim, self.num_tasks);
        let scale = 1.0 / b as f64;
        let mut loss = 0.0;
        let mut gu = Tensor2::zeros(b, d * k);
        let mut gi = Tensor2::zeros(b, d);
        for r in 0..b {
            let logits = embedding_logits(ue.row(r), ie.row(r));
            for (t, &logit) in logits.iter().enumerate() {
                let (l, g) = bce_with_logit(batch.labels.get(r, t), logit);
                loss += l;
                let g = g * scale;
                let user_t = &ue.row(r)[t * d..(t + 1) * d];
                let item = ie.row(r);
                for j in 0..d {
                    gi.row_mut(r)[j] += g * user_t[j];
                    gu.row_mut(r)[t * d + j] += g * item[j];
                }
            }
        }
        if backprop {
            self.user.backward_params(&gu)?;
            self.item.backward_params(&gi)?;
        }
        Ok((loss * scale, self.overarch_batch(&ue, &ie)))
    }

    /// Batch-averaged sum of per-task BCE losses, accumulating tower grads.
    pub fn embedding_loss_grad(&mut self, batch: &Batch) -> Result<f64> {
        let (loss, _) = self.embedding_pass(batch, true)?;
        finite(loss, "embedding loss")
    }

    pub fn embedding_loss(&self, batch: &Batch) -> Result<f64> {
        let ue = self.user.predict(&batch.users)?;
        let ie = self.item.predict(&batch.items)?;
        let mut loss = 0.0;
        for r in 0..batch.len() {
            for (t, logit) in embedding_logits(ue.row(r), ie.row(r)).into_iter().enumerate() {
                loss += bce_with_logit(batch.labels.get(r, t), logit).0;
            }
        }
        finite(loss / batch.len() as f64, "embedding loss")
    }
}

impl NamedParams for TwoTower {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        visit_prefixed("user_tower", &self.user, f);
        visit_prefixed("item_tower", &self.item, f);
    }

    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        let (head, rest) = split_prefix(name)?;
        match head {
            "user_tower" => self.user.assign_param(rest, value),
            "item_tower" => self.item.assign_param(rest, value),
            _ => Err(config_err!("unknown tower `{head}`")),
        }
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(alloc::format!("{what} is not finite ({v})")))
    }
}

/// Treatment model: two towers plus an epinet overarch trained on one task.
#[derive(Debug, Clone, PartialEq)]
pub struct EpinetModel {
    towers: TwoTower,
    head: EpinetHead,
    epinet_task: usize,
}

impl EpinetModel {
    /// Towers and head draw from `init`; the prior network from `prior_init`.
    pub fn new(shape: &ModelShape, epinet_task: usize, init: &mut Rng, prior_init: &mut Rng) -> Result<Self> {
        let towers = TwoTower::new(shape, init)?;
        let head = EpinetHead::new(&shape.epinet_shape(), shape.prior_scale, init, prior_init)?;
        Self::from_parts(towers, head, epinet_task)
    }

    pub fn zeros(shape: &ModelShape, epinet_task: usize) -> Result<Self> {
        Self::from_parts(
            TwoTower::zeros(shape)?,
            EpinetHead::zeros(&shape.epinet_shape(), shape.prior_scale)?,
            epinet_task,
        )
    }

    pub fn from_parts(towers: TwoTower, head: EpinetHead, epinet_task: usize) -> Result<Self> {
        if epinet_task >= towers.num_tasks() {
            return Err(config_err!(
                "epinet task {epinet_task} out of range for {} tasks",
                towers.num_tasks()
            ));
        }
        if head.input_dim() != overarch_dim(towers.embed_dim(), towers.num_tasks()) {
            return Err(config_err!(
                "epinet head expects {} inputs, towers produce {}",
                head.input_dim(),
                overarch_dim(towers.embed_dim(), towers.num_tasks())
            ));
        }
        Ok(Self {
            towers,
            head,
            epinet_task,
        })
    }

    pub fn towers(&self) -> &TwoTower {
        &self.towers
    }

    pub fn head(&self) -> &EpinetHead {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut EpinetHead {
        &mut self.head
    }

    pub fn epinet_task(&self) -> usize {
        self.epinet_task
    }

    pub fn index_dim(&self) -> usize {
        self.head.index_dim()
    }

    /// Batch-averaged loss terms without touching any gradient.
    pub fn loss(&self, batch: &Batch, z: &Tensor2) -> Result<LossBreakdown> {
        batch.validate_dims(&self.towers)?;
        let embedding = self.towers.embedding_loss(batch)?;
        let ue = self.towers.user_embeddings(&batch.users)?;
        let ie = self.towers.item_embeddings(&batch.items)?;
        let x = self.towers.overarch_batch(&ue, &ie);
        let logits = self.head.predict(&x, z)?;
        let epinet = logits
            .iter()
            .enumerate()
            .map(|(r, &f)| bce_with_logit(batch.labels.get(r, self.epinet_task), f).0)
            .sum::<f64>()
            / batch.len() as f64;
        Ok(LossBreakdown {
            embedding,
            epinet: finite(epinet, "epinet loss")?,
        })
    }

    /// Computes both loss terms and accumulates the gradients of the
    /// selected terms. `z` holds one index row shared by the batch, or one
    /// row per example.
    pub fn accumulate_gradients(&mut self, batch: &Batch, z: &Tensor2, terms: LossTerms) -> Result<LossBreakdown> {
        batch.validate_dims(&self.towers)?;
        let (embedding, x) = self.towers.embedding_pass(batch, terms.embedding)?;
        let logits = self.head.forward(&x, z)?;
        let scale = 1.0 / batch.len() as f64;
        let mut epinet = 0.0;
        let mut upstream = Vec::with_capacity(logits.len());
        for (r, &f) in logits.iter().enumerate() {
            let (l, g) = bce_with_logit(batch.labels.get(r, self.epinet_task), f);
            epinet += l;
            upstream.push(g * scale);
        }
        if terms.epinet {
            // the returned input gradient is zero; nothing flows into the towers
            self.head.backward(&upstream)?;
        }
        Ok(LossBreakdown {
            embedding: finite(embedding, "embedding loss")?,
            epinet: finite(epinet * scale, "epinet loss")?,
        })
    }

    /// Full loss with gradients for every trainable parameter.
    pub fn total_loss(&mut self, batch: &Batch, z: &Tensor2) -> Result<LossBreakdown> {
        self.accumulate_gradients(batch, z, LossTerms::BOTH)
    }

    pub fn train_step(&mut self, batch: &Batch, z: &Tensor2, optimizer: &Optimizer) -> Result<LossBreakdown> {
        let loss = self.total_loss(batch, z)?;
        for store in self.trainable_stores_mut() {
            store.apply(optimizer)?;
        }
        Ok(loss)
    }

    pub fn trainable_stores_mut(&mut self) -> Vec<&mut ParameterStore> {
        let mut v: Vec<&mut ParameterStore> = self.towers.trainable_stores_mut().into_iter().collect();
        v.extend(self.head.trainable_stores_mut());
        v
    }

    pub fn zero_grads(&mut self) {
        for s in self.trainable_stores_mut() {
            s.zero_grads();
        }
    }

    /// Overarch inputs of every (user, item) row of a minibatch.
    pub fn batch_overarch_inputs(&self, batch: &Batch) -> Result<Tensor2> {
        batch.validate_dims(&self.towers)?;
        let ue = self.towers.user_embeddings(&batch.users)?;
        let ie = self.towers.item_embeddings(&batch.items)?;
        Ok(self.towers.overarch_batch(&ue, &ie))
    }

    /// Overarch inputs for one user against every item row.
    pub fn overarch_inputs(&self, user: &Tensor2, items: &Tensor2) -> Result<Tensor2> {
        if user.rows() != 1 {
            return Err(config_err!("scoring takes exactly one user, got {}", user.rows()));
        }
        let ue = self.towers.user_embeddings(user)?;
        let ie = self.towers.item_embeddings(items)?;
        Ok(self.towers.overarch_batch(&ue, &ie))
    }

    /// Overarch logit of every item for one user under a single index `z`.
    pub fn score_items(&self, user: &Tensor2, items: &Tensor2, z: &[f64]) -> Result<Vec<f64>> {
        if user.rows() != 1 {
            return Err(config_err!("scoring takes exactly one user, got {}", user.rows()));
        }
        let ue = self.towers.user_embeddings(user)?;
        let ie = self.towers.item_embeddings(items)?;
        let u = ue.row(0);
        let d = ie.cols();
        // [item ‖ item ⊙ user_k] per row; the user block is shared
        let tail = Tensor2::from_fn(ie.rows(), d * (self.towers.num_tasks + 1), |r, c| {
            let v = ie.get(r, c % d);
            if c < d {
                v
            } else {
                v * u[c - d]
            }
        });
        self.head.predict_shared_prefix(u, &tail, z)
    }
}

impl Batch {
    fn validate_dims(&self, towers: &TwoTower) -> Result<()> {
        if self.users.cols() != towers.user.input_dim() || self.items.cols() != towers.item.input_dim() {
            return Err(config_err!(
                "batch features ({}, {}) do not match towers ({}, {})",
                self.users.cols(),
                self.items.cols(),
                towers.user.input_dim(),
                towers.item.input_dim()
            ));
        }
        if self.labels.cols() != towers.num_tasks {
            return Err(config_err!(
                "labels have {} tasks, model has {}",
                self.labels.cols(),
                towers.num_tasks
            ));
        }
        let b = self.users.rows();
        if b == 0 || self.items.rows() != b || self.labels.rows() != b {
            return Err(config_err!("minibatch parts disagree on batch size or are empty"));
        }
        if self.labels.data().iter().any(|y| !(0.0..=1.0).contains(y)) {
            return Err(config_err!("labels must lie in [0, 1]"));
        }
        Ok(())
    }
}

impl NamedParams for EpinetModel {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        self.towers.visit_params(f);
        visit_prefixed("head", &self.head, f);
    }

    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        match split_prefix(name)? {
            ("head", rest) => self.head.assign_param(rest, value),
            _ => self.towers.assign_param(name, value),
        }
    }
}

/// Control model: towers only, scored greedily by a weighted sum of task
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PointModel {
    towers: TwoTower,
    score_weights: Vec<f64>,
}

impl PointModel {
    pub fn new(shape: &ModelShape, score_weights: Vec<f64>, init: &mut Rng) -> Result<Self> {
        Self::from_towers(TwoTower::new(shape, init)?, score_weights)
    }

    pub fn zeros(shape: &ModelShape, score_weights: Vec<f64>) -> Result<Self> {
        Self::from_towers(TwoTower::zeros(shape)?, score_weights)
    }

    pub fn from_towers(towers: TwoTower, score_weights: Vec<f64>) -> Result<Self> {
        if score_weights.len() != towers.num_tasks() {
            return Err(config_err!(
                "{} score weights for {} tasks",
                score_weights.len(),
                towers.num_tasks()
            ));
        }
        Ok(Self {
            towers,
            score_weights,
        })
    }

    pub fn towers(&self) -> &TwoTower {
        &self.towers
    }

    pub fn score_weights(&self) -> &[f64] {
        &self.score_weights
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        batch.validate_dims(&self.towers)?;
        self.towers.embedding_loss(batch)
    }

    pub fn train_step(&mut self, batch: &Batch, optimizer: &Optimizer) -> Result<f64> {
        batch.validate_dims(&self.towers)?;
        let loss = self.towers.embedding_loss_grad(batch)?;
        for store in self.towers.trainable_stores_mut() {
            store.apply(optimizer)?;
        }
        Ok(loss)
    }

    pub fn accumulate_gradients(&mut self, batch: &Batch) -> Result<f64> {
        batch.validate_dims(&self.towers)?;
        self.towers.embedding_loss_grad(batch)
    }

    pub fn trainable_stores_mut(&mut self) -> Vec<&mut ParameterStore> {
        self.towers.trainable_stores_mut().into_iter().collect()
    }

    /// `Σ_k w_k · sigmoid(item · user_k)` for every item.
    pub fn score_items(&self, user: &Tensor2, items: &Tensor2) -> Result<Vec<f64>> {
        if user.rows() != 1 {
            return Err(config_err!("scoring takes exactly one user, got {}", user.rows()));
        }
        let ue = self.towers.user_embeddings(user)?;
        let ie = self.towers.item_embeddings(items)?;
        Ok((0..ie.rows())
            .map(|r| {
                embedding_logits(ue.row(0), ie.row(r))
                    .into_iter()
                    .zip(&self.score_weights)
                    .filter(|(_, &w)| w != 0.0)
                    .map(|(l, w)| w * sigmoid(l))
                    .sum()
            })
            .collect())
    }
}

impl NamedParams for PointModel {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        self.towers.visit_params(f)
    }

    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        self.towers.assign_param(name, value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overarch_hand_example() {
        let x = build_overarch_input(&[1.0, 2.0], &[3.0, 4.0], 1).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0, 3.0, 8.0]);
    }

    #[test]
    fn overarch_zero_item() {
        let user = [1.0, -2.0, 0.5, 4.0];
        let x = build_overarch_input(&user, &[0.0, 0.0], 2).unwrap();
        assert_eq!(&x[..4], &user);
        assert!(x[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn overarch_rejects_bad_dims() {
        assert!(build_overarch_input(&[1.0, 2.0, 3.0], &[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn embedding_logit_cases() {
        assert_eq!(embedding_logits(&[1.0, 0.0], &[0.0, 1.0]), vec![0.0]);
        assert_eq!(sigmoid(embedding_logits(&[1.0, 0.0], &[0.0, 1.0])[0]), 0.5);
        let v = [1.0, 1.0, -1.0];
        assert_eq!(embedding_logits(&v, &v), vec![3.0]);
    }
}
