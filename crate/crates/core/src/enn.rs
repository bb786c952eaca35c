//! Epistemic neural networks: networks `f(x, z)` whose output depends on an
//! input and an epistemic index `z` drawn from a reference distribution.
//! Integrating over `z` gives the marginal prediction; fixing one `z`
//! gives one sampled hypothesis, which is what Thompson sampling acts on.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, Error, Result};
use crate::nn::{sigmoid, DenseNet, ParameterStore};
use crate::params::{split_prefix, visit_prefixed, NamedParams};
use crate::rng::Rng;
use crate::tensor::{dot, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceDistribution {
    /// `N(0, I)` of dimension `dim`.
    Gaussian { dim: usize },
    /// Uniform over `{0, 1}^dim`.
    BinaryMask { dim: usize },
    /// Uniform over particle ids `1..=size`.
    Discrete { size: usize },
}

impl ReferenceDistribution {
    pub fn sample(&self, rng: &mut Rng) -> EpistemicIndex {
        match *self {
            ReferenceDistribution::Gaussian { dim } => {
                EpistemicIndex::Gaussian((0..dim).map(|_| rng.normal()).collect())
            }
            ReferenceDistribution::BinaryMask { dim } => EpistemicIndex::Mask(
                (0..dim)
                    .map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 })
                    .collect(),
            ),
            ReferenceDistribution::Discrete { size } => EpistemicIndex::Particle(1 + rng.below(size)),
        }
    }

    fn admits(&self, z: &EpistemicIndex) -> bool {
        match (*self, z) {
            (ReferenceDistribution::Gaussian { dim }, EpistemicIndex::Gaussian(v)) => v.len() == dim,
            (ReferenceDistribution::BinaryMask { dim }, EpistemicIndex::Mask(m)) => {
                m.len() == dim && m.iter().all(|&b| b == 0.0 || b == 1.0)
            }
            (ReferenceDistribution::Discrete { size }, EpistemicIndex::Particle(p)) => (1..=size).contains(p),
            _ => false,
        }
    }
}

/// One draw from a [`ReferenceDistribution`].
#[derive(Debug, Clone, PartialEq)]
pub enum EpistemicIndex {
    Gaussian(Vec<f64>),
    /// 0/1 entries, one per input feature.
    Mask(Vec<f64>),
    /// 1-based particle id.
    Particle(usize),
}

impl EpistemicIndex {
    pub fn as_gaussian(&self) -> Option<&[f64]> {
        match self {
            EpistemicIndex::Gaussian(v) => Some(v),
            _ => None,
        }
    }
}

/// Sizes of an [`EpinetHead`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpinetShape {
    pub input_dim: usize,
    pub base_hidden: Vec<usize>,
    pub epinet_hidden: Vec<usize>,
    pub index_dim: usize,
}

impl EpinetShape {
    fn base_dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend_from_slice(&self.base_hidden);
        d.push(1);
        d
    }

    fn epinet_dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim + self.index_dim];
        d.extend_from_slice(&self.epinet_hidden);
        d.push(self.index_dim);
        d
    }
}

/// Additive epinet head:
///
/// ```text
/// f(x, z) = base(x) + learnable([x, z])ᵀ z + prior_scale · prior([x, z])ᵀ z
/// ```
///
/// `x` enters as a constant (stop-gradient): backward never reports a
/// gradient with respect to it. The prior network is frozen at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EpinetHead {
    base: DenseNet,
    learnable: DenseNet,
    prior: DenseNet,
    prior_scale: f64,
    index_dim: usize,
    cached_z: Option<Tensor2>,
}

impl EpinetHead {
    /// Glorot-initialised head. The prior network draws from its own stream.
    pub fn new(shape: &EpinetShape, prior_scale: f64, init: &mut Rng, prior_init: &mut Rng) -> Result<Self> {
        Self::check_shape(shape, prior_scale)?;
        Ok(Self {
            base: DenseNet::new(&shape.base_dims(), init)?,
            learnable: DenseNet::new(&shape.epinet_dims(), init)?,
            prior: DenseNet::new(&shape.epinet_dims(), prior_init)?,
            prior_scale,
            index_dim: shape.index_dim,
            cached_z: None,
        })
    }

    /// Same as [`EpinetHead::new`] but with an all-zero learnable network.
    pub fn with_zero_learnable(
        shape: &EpinetShape,
        prior_scale: f64,
        init: &mut Rng,
        prior_init: &mut Rng,
    ) -> Result<Self> {
        let mut head = Self::new(shape, prior_scale, init, prior_init)?;
        head.learnable = DenseNet::zeros(&shape.epinet_dims())?;
        Ok(head)
    }

    /// All-zero skeleton, to be filled from a checkpoint.
    pub fn zeros(shape: &EpinetShape, prior_scale: f64) -> Result<Self> {
        Self::check_shape(shape, prior_scale)?;
        Ok(Self {
            base: DenseNet::zeros(&shape.base_dims())?,
            learnable: DenseNet::zeros(&shape.epinet_dims())?,
            prior: DenseNet::zeros(&shape.epinet_dims())?,
            prior_scale,
            index_dim: shape.index_dim,
            cached_z: None,
        })
    }

    fn check_shape(shape: &EpinetShape, prior_scale: f64) -> Result<()> {
        if shape.index_dim == 0 {
            return Err(config_err!("epistemic index dimension must be positive"));
        }
        if !(prior_scale >= 0.0 && prior_scale.is_finite()) {
            return Err(config_err!("prior scale must be finite and non-negative, got {prior_scale}"));
        }
        Ok(())
    }

    pub fn shape(&self) -> EpinetShape {
        let dims = self.base.layer_dims();
        let edims = self.learnable.layer_dims();
        EpinetShape {
            input_dim: dims[0],
            base_hidden: dims[1..dims.len() - 1].to_vec(),
            epinet_hidden: edims[1..edims.len() - 1].to_vec(),
            index_dim: self.index_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.base.input_dim()
    }

    pub fn index_dim(&self) -> usize {
        self.index_dim
    }

    pub fn prior_scale(&self) -> f64 {
        self.prior_scale
    }

    pub fn reference(&self) -> ReferenceDistribution {
        ReferenceDistribution::Gaussian { dim: self.index_dim }
    }

    pub fn base(&self) -> &DenseNet {
        &self.base
    }

    pub fn learnable(&self) -> &DenseNet {
        &self.learnable
    }

    pub fn prior(&self) -> &DenseNet {
        &self.prior
    }

    /// The two trainable stores (base, learnable). The prior is never exposed mutably.
    pub fn trainable_stores_mut(&mut self) -> [&mut ParameterStore; 2] {
        [self.base.params_mut(), self.learnable.params_mut()]
    }

    /// Expands `z` to one row per input row. `z` may hold a single row
    /// (shared index) or exactly `batch` rows (one index per example).
    fn index_rows(&self, z: &Tensor2, batch: usize) -> Result<Tensor2> {
        if z.cols() != self.index_dim {
            return Err(config_err!(
                "epistemic index has dimension {}, head expects {}",
                z.cols(),
                self.index_dim
            ));
        }
        if z.rows() == batch {
            Ok(z.clone())
        } else if z.rows() == 1 {
            Ok(Tensor2::from_fn(batch, self.index_dim, |_, c| z.get(0, c)))
        } else {
            Err(config_err!(
                "got {} epistemic indices for a batch of {}",
                z.rows(),
                batch
            ))
        }
    }

    fn check_input(&self, x: &Tensor2) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(config_err!(
                "epinet head expects {} input features, got {}",
                self.input_dim(),
                x.cols()
            ));
        }
        Ok(())
    }

    /// `net([x, z])ᵀ z` for every row.
    fn index_head(net: &DenseNet, x: &Tensor2, zrows: &Tensor2) -> Result<Vec<f64>> {
        let out = net.predict(&x.hconcat(zrows)?)?;
        Ok((0..x.rows()).map(|r| dot(out.row(r), zrows.row(r))).collect())
    }

    /// Split of the head output into its three additive terms
    /// `(base, learnable, prior)`; the prior term is not yet scaled.
    pub fn components(&self, x: &Tensor2, z: &Tensor2) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let zrows = self.index_rows(z, x.rows())?;
        let base = self.base.predict(x)?.into_vec();
        let learn = Self::index_head(&self.learnable, x, &zrows)?;
        let prior = Self::index_head(&self.prior, x, &zrows)?;
        Ok((base, learn, prior))
    }

    /// One logit per row, no caching.
    pub fn predict(&self, x: &Tensor2, z: &Tensor2) -> Result<Vec<f64>> {
        let (base, learn, prior) = self.components(x, z)?;
        Ok(base
            .iter()
            .zip(&learn)
            .zip(&prior)
            .map(|((b, l), p)| b + l + self.prior_scale * p)
            .collect())
    }

    /// [`EpinetHead::predict`] under one shared index for rows whose
    /// leading `shared.len()` features coincide; `tail` holds the rest.
    pub fn predict_shared_prefix(&self, shared: &[f64], tail: &Tensor2, z: &[f64]) -> Result<Vec<f64>> {
        if shared.len() + tail.cols() != self.input_dim() {
            return Err(config_err!(
                "split input {} + {} does not match head width {}",
                shared.len(),
                tail.cols(),
                self.input_dim()
            ));
        }
        if z.len() != self.index_dim {
            return Err(config_err!(
                "epistemic index has dimension {}, head expects {}",
                z.len(),
                self.index_dim
            ));
        }
        let mut fixed = shared.to_vec();
        fixed.resize(self.input_dim(), 0.0);
        let base = self.base.predict_partitioned(&fixed, shared.len(), tail)?;
        fixed.extend_from_slice(z);
        let learn = self.learnable.predict_partitioned(&fixed, shared.len(), tail)?;
        let prior = self.prior.predict_partitioned(&fixed, shared.len(), tail)?;
        Ok((0..tail.rows())
            .map(|r| base.get(r, 0) + dot(learn.row(r), z) + self.prior_scale * dot(prior.row(r), z))
            .collect())
    }

    /// One logit per row, caching what [`EpinetHead::backward`] needs.
    pub fn forward(&mut self, x: &Tensor2, z: &Tensor2) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let zrows = self.index_rows(z, x.rows())?;
        let xz = x.hconcat(&zrows)?;
        let base = self.base.forward(x)?;
        let learn = self.learnable.forward(&xz)?;
        let prior = self.prior.predict(&xz)?;
        let out = (0..x.rows())
            .map(|r| {
                base.get(r, 0)
                    + dot(learn.row(r), zrows.row(r))
                    + self.prior_scale * dot(prior.row(r), zrows.row(r))
            })
            .collect();
        self.cached_z = Some(zrows);
        Ok(out)
    }

    /// Accumulates gradients into the base and learnable networks. The
    /// returned input gradient is identically zero (stop-gradient on `x`).
    pub fn backward(&mut self, upstream: &[f64]) -> Result<Tensor2> {
        let zrows = self
            .cached_z
            .as_ref()
            .ok_or_else(|| Error::State("epinet backward called before forward".to_string()))?;
        if upstream.len() != zrows.rows() {
            return Err(config_err!(
                "upstream gradient has {} rows, forward had {}",
                upstream.len(),
                zrows.rows()
            ));
        }
        let g = Tensor2::from_vec(upstream.len(), 1, upstream.to_vec())?;
        self.base.backward_params(&g)?;
        let gl = Tensor2::from_fn(zrows.rows(), self.index_dim, |r, c| upstream[r] * zrows.get(r, c));
        self.learnable.backward_params(&gl)?;
        Ok(Tensor2::zeros(upstream.len(), self.input_dim()))
    }
}

impl NamedParams for EpinetHead {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        visit_prefixed("base", &self.base, f);
        visit_prefixed("learnable", &self.learnable, f);
        visit_prefixed("prior", &self.prior, f);
    }

    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        let (head, rest) = split_prefix(name)?;
        match head {
            "base" => self.base.assign_param(rest, value),
            "learnable" => self.learnable.assign_param(rest, value),
            "prior" => self.prior.assign_param(rest, value),
            _ => Err(config_err!("unknown epinet component `{head}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnnVariant {
    PointEstimate,
    McDropout,
    DeepEnsemble,
    Epinet,
}

/// The four epistemic-network variants over scalar-logit base networks.
#[derive(Debug, Clone, PartialEq)]
pub enum EpistemicNet {
    /// `g(x)`, ignoring the index; the reference distribution is arbitrary.
    PointEstimate(DenseNet),
    /// `g(x ⊙ z)` with `z` uniform over binary masks.
    McDropout(DenseNet),
    /// `g_z(x)` with `z` uniform over particles.
    DeepEnsemble { particles: Vec<DenseNet>, last: Option<usize> },
    Epinet(EpinetHead),
}

impl EpistemicNet {
    pub fn point_estimate(net: DenseNet) -> Result<Self> {
        Self::check_scalar(&net)?;
        Ok(EpistemicNet::PointEstimate(net))
    }

    pub fn mc_dropout(net: DenseNet) -> Result<Self> {
        Self::check_scalar(&net)?;
        Ok(EpistemicNet::McDropout(net))
    }

    pub fn deep_ensemble(particles: Vec<DenseNet>) -> Result<Self> {
        if particles.is_empty() {
            return Err(config_err!("an ensemble needs at least one particle"));
        }
        for p in &particles {
            Self::check_scalar(p)?;
            if p.layer_dims() != particles[0].layer_dims() {
                return Err(config_err!("ensemble particles must share one architecture"));
            }
        }
        Ok(EpistemicNet::DeepEnsemble { particles, last: None })
    }

    pub fn epinet(head: EpinetHead) -> Self {
        EpistemicNet::Epinet(head)
    }

    fn check_scalar(net: &DenseNet) -> Result<()> {
        if net.output_dim() != 1 {
            return Err(config_err!(
                "epistemic networks produce one logit; base net has {} outputs",
                net.output_dim()
            ));
        }
        Ok(())
    }

    pub fn variant(&self) -> EnnVariant {
        match self {
            EpistemicNet::PointEstimate(_) => EnnVariant::PointEstimate,
            EpistemicNet::McDropout(_) => EnnVariant::McDropout,
            EpistemicNet::DeepEnsemble { .. } => EnnVariant::DeepEnsemble,
            EpistemicNet::Epinet(_) => EnnVariant::Epinet,
        }
    }

    pub fn reference(&self) -> ReferenceDistribution {
        match self {
            // any distribution works; a 1-d Gaussian keeps draws cheap
            EpistemicNet::PointEstimate(_) => ReferenceDistribution::Gaussian { dim: 1 },
            EpistemicNet::McDropout(net) => ReferenceDistribution::BinaryMask { dim: net.input_dim() },
            EpistemicNet::DeepEnsemble { particles, .. } => ReferenceDistribution::Discrete {
                size: particles.len(),
            },
            EpistemicNet::Epinet(head) => head.reference(),
        }
    }

    fn check_index(&self, z: &EpistemicIndex) -> Result<()> {
        let ok = match self {
            EpistemicNet::PointEstimate(_) => true,
            _ => self.reference().admits(z),
        };
        if ok {
            Ok(())
        } else {
            Err(config_err!(
                "epistemic index {z:?} does not belong to {:?}",
                self.reference()
            ))
        }
    }

    fn masked(x: &Tensor2, mask: &[f64]) -> Result<Tensor2> {
        if mask.len() != x.cols() {
            return Err(config_err!("mask length {} != input width {}", mask.len(), x.cols()));
        }
        Ok(Tensor2::from_fn(x.rows(), x.cols(), |r, c| x.get(r, c) * mask[c]))
    }

    /// One logit per input row under index `z`.
    pub fn predict(&self, x: &Tensor2, z: &EpistemicIndex) -> Result<Vec<f64>> {
        self.check_index(z)?;
        match (self, z) {
            (EpistemicNet::PointEstimate(net), _) => Ok(net.predict(x)?.into_vec()),
            (EpistemicNet::McDropout(net), EpistemicIndex::Mask(m)) => {
                Ok(net.predict(&Self::masked(x, m)?)?.into_vec())
            }
            (EpistemicNet::DeepEnsemble { particles, .. }, EpistemicIndex::Particle(p)) => {
                Ok(particles[p - 1].predict(x)?.into_vec())
            }
            (EpistemicNet::Epinet(head), EpistemicIndex::Gaussian(v)) => {
                head.predict(x, &Tensor2::row_vector(v.clone()))
            }
            _ => unreachable!("index checked against reference"),
        }
    }

    /// Caching forward pass for [`EpistemicNet::backward`].
    pub fn forward(&mut self, x: &Tensor2, z: &EpistemicIndex) -> Result<Vec<f64>> {
        self.check_index(z)?;
        match (self, z) {
            (EpistemicNet::PointEstimate(net), _) => Ok(net.forward(x)?.into_vec()),
            (EpistemicNet::McDropout(net), EpistemicIndex::Mask(m)) => {
                Ok(net.forward(&Self::masked(x, m)?)?.into_vec())
            }
            (EpistemicNet::DeepEnsemble { particles, last }, EpistemicIndex::Particle(p)) => {
                *last = Some(*p);
                Ok(particles[p - 1].forward(x)?.into_vec())
            }
            (EpistemicNet::Epinet(head), EpistemicIndex::Gaussian(v)) => {
                head.forward(x, &Tensor2::row_vector(v.clone()))
            }
            _ => unreachable!("index checked against reference"),
        }
    }

    /// Accumulates gradients of the trainable parts for the index used in
    /// the preceding [`EpistemicNet::forward`].
    pub fn backward(&mut self, z: &EpistemicIndex, upstream: &[f64]) -> Result<()> {
        self.check_index(z)?;
        let g = Tensor2::from_vec(upstream.len(), 1, upstream.to_vec())?;
        match (self, z) {
            (EpistemicNet::PointEstimate(net), _) | (EpistemicNet::McDropout(net), _) => {
                net.backward_params(&g)
            }
            (EpistemicNet::DeepEnsemble { particles, last }, EpistemicIndex::Particle(p)) => {
                if *last != Some(*p) {
                    return Err(Error::State(
                        "ensemble backward with a particle other than the cached forward".to_string(),
                    ));
                }
                particles[p - 1].backward_params(&g)
            }
            (EpistemicNet::Epinet(head), _) => head.backward(upstream).map(|_| ()),
            _ => unreachable!("index checked against reference"),
        }
    }

    /// Monte-Carlo marginal: mean and variance of `sigmoid(f(x, z))` over
    /// `n_samples` fresh indices, per input row.
    pub fn marginal_prediction(&self, x: &Tensor2, n_samples: usize, rng: &mut Rng) -> Result<Vec<(f64, f64)>> {
        if n_samples == 0 {
            return Err(config_err!("marginal prediction needs at least one sample"));
        }
        let reference = self.reference();
        // Welford keeps the variance of identical samples at exactly zero.
        let mut mean = vec![0.0; x.rows()];
        let mut m2 = vec![0.0; x.rows()];
        for k in 1..=n_samples {
            let z = reference.sample(rng);
            let logits = self.predict(x, &z)?;
            for (r, &l) in logits.iter().enumerate() {
                let p = sigmoid(l);
                let delta = p - mean[r];
                mean[r] += delta / k as f64;
                m2[r] += delta * (p - mean[r]);
            }
        }
        Ok(mean
            .into_iter()
            .zip(m2)
            .map(|(m, s)| (m, s / n_samples as f64))
            .collect())
    }

    pub fn trainable_stores_mut(&mut self) -> Vec<&mut ParameterStore> {
        match self {
            EpistemicNet::PointEstimate(net) | EpistemicNet::McDropout(net) => vec![net.params_mut()],
            EpistemicNet::DeepEnsemble { particles, .. } => {
                particles.iter_mut().map(|p| p.params_mut()).collect()
            }
            EpistemicNet::Epinet(head) => head.trainable_stores_mut().into_iter().collect(),
        }
    }
}

impl NamedParams for EpistemicNet {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        match self {
            EpistemicNet::PointEstimate(net) | EpistemicNet::McDropout(net) => visit_prefixed("net", net, f),
            EpistemicNet::DeepEnsemble { particles, .. } => {
                for (i, p) in particles.iter().enumerate() {
                    visit_prefixed(&alloc::format!("particle{}", i + 1), p, f);
                }
            }
            EpistemicNet::Epinet(head) => visit_prefixed("epinet", head, f),
        }
    }

    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        let (head, rest) = split_prefix(name)?;
        match self {
            EpistemicNet::PointEstimate(net) | EpistemicNet::McDropout(net) if head == "net" => {
                net.assign_param(rest, value)
            }
            EpistemicNet::DeepEnsemble { particles, .. } => {
                let idx: usize = head
                    .strip_prefix("particle")
                    .and_then(|s| s.parse().ok())
                    .filter(|i| (1..=particles.len()).contains(i))
                    .ok_or_else(|| config_err!("unknown ensemble particle `{head}`"))?;
                particles[idx - 1].assign_param(rest, value)
            }
            EpistemicNet::Epinet(h) if head == "epinet" => h.assign_param(rest, value),
            _ => Err(config_err!("unknown parameter `{name}`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> EpinetShape {
        EpinetShape {
            input_dim: 4,
            base_hidden: vec![8],
            epinet_hidden: vec![8],
            index_dim: 3,
        }
    }

    #[test]
    fn zero_index_leaves_only_the_base() {
        let head = EpinetHead::new(&shape(), 1.0, &mut Rng::new(1), &mut Rng::new(2)).unwrap();
        let x = Tensor2::from_fn(3, 4, |r, c| (r as f64) - 0.5 * c as f64);
        let z = Tensor2::zeros(1, 3);
        let (base, learn, prior) = head.components(&x, &z).unwrap();
        assert!(learn.iter().all(|&v| v == 0.0));
        assert!(prior.iter().all(|&v| v == 0.0));
        assert_eq!(head.predict(&x, &z).unwrap(), base);
    }

    #[test]
    fn backward_reports_zero_input_gradient_and_leaves_prior_alone() {
        let mut head = EpinetHead::new(&shape(), 1.0, &mut Rng::new(1), &mut Rng::new(2)).unwrap();
        let x = Tensor2::from_fn(2, 4, |r, c| 0.3 * (r + c) as f64 - 0.4);
        let z = Tensor2::row_vector(vec![0.5, -1.0, 2.0]);
        head.forward(&x, &z).unwrap();
        let gx = head.backward(&[1.0, -0.5]).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(head.prior().params().iter().all(|(_, _, g)| g.data().iter().all(|&v| v == 0.0)));
        assert!(head.base().params().iter().any(|(_, _, g)| g.data().iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn index_variant_mismatch_is_config_error() {
        let head = EpinetHead::new(&shape(), 1.0, &mut Rng::new(1), &mut Rng::new(2)).unwrap();
        let net = EpistemicNet::epinet(head);
        let x = Tensor2::zeros(1, 4);
        assert!(matches!(net.predict(&x, &EpistemicIndex::Particle(1)), Err(Error::Config(_))));
        assert!(matches!(
            net.predict(&x, &EpistemicIndex::Gaussian(vec![0.0; 2])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn discrete_draws_stay_in_range() {
        let reference = ReferenceDistribution::Discrete { size: 4 };
        let mut rng = Rng::new(9);
        for _ in 0..1000 {
            match reference.sample(&mut rng) {
                EpistemicIndex::Particle(p) => assert!((1..=4).contains(&p)),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn negative_prior_scale_rejected() {
        assert!(EpinetHead::new(&shape(), -1.0, &mut Rng::new(1), &mut Rng::new(2)).is_err());
    }
}
