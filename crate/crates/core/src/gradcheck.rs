//! Central finite-difference verification of analytic gradients.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::enn::EpinetHead;
use crate::error::{config_err, Result};
use crate::model::{Batch, EpinetModel, LossTerms, ModelShape, PointModel};
use crate::rng::Rng;
use crate::nn::{bce_with_logit, DenseNet};
use crate::params::NamedParams;
use crate::tensor::Tensor2;

/// A scalar loss over named parameters with an analytic gradient.
pub trait GradTarget: NamedParams {
    fn loss(&self) -> Result<f64>;

    /// Analytic gradient of every trainable tensor, by full parameter name.
    fn analytic(&mut self) -> Result<Vec<(String, Tensor2)>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
    /// Fault injection: perturb the analytic gradient of this tensor.
    pub corrupt: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_floor: 1e-7,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    /// Largest `|a − n| / max(|a|, |n|, floor / tol)`; below `tol` exactly
    /// when each entry is within the relative tolerance or the absolute floor.
    pub max_error: f64,
    pub max_abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub component: String,
    pub tensors: Vec<TensorCheck>,
    /// Tensors that exist but are not trainable (not checked).
    pub frozen: Vec<String>,
    pub rel_tol: f64,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_error() < self.rel_tol
    }
}

fn current(target: &dyn GradTarget, name: &str) -> Result<Tensor2> {
    let mut found = None;
    target.visit_params(&mut |n, t| {
        if n == name {
            found = Some(t.clone());
        }
    });
    found.ok_or_else(|| config_err!("no parameter `{name}`"))
}

/// Compare every analytic partial derivative against `(L(p+h) − L(p−h)) / 2h`.
pub fn check(component: &str, target: &mut dyn GradTarget, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut analytic = target.analytic()?;
    if let Some(bad) = &opts.corrupt {
        let (_, g) = analytic
            .iter_mut()
            .find(|(n, _)| n == bad)
            .ok_or_else(|| config_err!("cannot corrupt unknown tensor `{bad}`"))?;
        let v = &mut g.data_mut()[0];
        *v = 2.0 * *v + 1.0;
    }
    let mut all = Vec::new();
    target.visit_params(&mut |n, _| all.push(n.to_string()));
    let frozen = all
        .iter()
        .filter(|n| !analytic.iter().any(|(a, _)| a == *n))
        .cloned()
        .collect();
    let denom_floor = opts.abs_floor / opts.rel_tol;
    let h = opts.step;
    let mut tensors = Vec::with_capacity(analytic.len());
    for (name, grad) in &analytic {
        let original = current(target, name)?;
        let mut probe = original.clone();
        let mut max_error: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for (i, &a) in grad.data().iter().enumerate() {
            let p = original.data()[i];
            probe.data_mut()[i] = p + h;
            target.assign_param(name, &probe)?;
            let up = target.loss()?;
            probe.data_mut()[i] = p - h;
            target.assign_param(name, &probe)?;
            let down = target.loss()?;
            probe.data_mut()[i] = p;
            let numeric = (up - down) / (2.0 * h);
            let diff = libm::fabs(a - numeric);
            let scale = libm::fabs(a).max(libm::fabs(numeric)).max(denom_floor);
            max_error = max_error.max(diff / scale);
            max_abs = max_abs.max(diff);
        }
        target.assign_param(name, &original)?;
        tensors.push(TensorCheck {
            name: name.clone(),
            entries: grad.data().len(),
            max_error,
            max_abs_diff: max_abs,
        });
    }
    Ok(GradcheckReport {
        component: component.to_string(),
        tensors,
        frozen,
        rel_tol: opts.rel_tol,
    })
}

fn collect_grads(prefix: &str, net: &DenseNet, out: &mut Vec<(String, Tensor2)>) {
    for (name, _, g) in net.params().iter() {
        out.push((alloc::format!("{prefix}{name}"), g.clone()));
    }
}

/// Scalar loss `Σ_b Σ_j w_bj · net(x)_bj` for a plain network.
pub struct DenseNetLoss {
    pub net: DenseNet,
    pub input: Tensor2,
    pub weights: Tensor2,
}

impl NamedParams for DenseNetLoss {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        self.net.visit_params(f)
    }
    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        self.net.assign_param(name, value)
    }
}

impl GradTarget for DenseNetLoss {
    fn loss(&self) -> Result<f64> {
        let out = self.net.predict(&self.input)?;
        Ok(out.data().iter().zip(self.weights.data()).map(|(o, w)| o * w).sum())
    }

    fn analytic(&mut self) -> Result<Vec<(String, Tensor2)>> {
        self.net.params_mut().zero_grads();
        self.net.forward(&self.input)?;
        self.net.backward(&self.weights)?;
        let mut out = Vec::new();
        collect_grads("", &self.net, &mut out);
        Ok(out)
    }
}

/// Mean BCE of an epinet head at a fixed index.
pub struct EpinetHeadLoss {
    pub head: EpinetHead,
    pub input: Tensor2,
    pub index: Tensor2,
    pub labels: Vec<f64>,
}

impl NamedParams for EpinetHeadLoss {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        self.head.visit_params(f)
    }
    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        self.head.assign_param(name, value)
    }
}

impl GradTarget for EpinetHeadLoss {
    fn loss(&self) -> Result<f64> {
        let out = self.head.predict(&self.input, &self.index)?;
        Ok(out
            .iter()
            .zip(&self.labels)
            .map(|(&f, &y)| bce_with_logit(y, f).0)
            .sum::<f64>()
            / out.len() as f64)
    }

    fn analytic(&mut self) -> Result<Vec<(String, Tensor2)>> {
        for s in self.head.trainable_stores_mut() {
            s.zero_grads();
        }
        let out = self.head.forward(&self.input, &self.index)?;
        let n = out.len() as f64;
        let g: Vec<f64> = out
            .iter()
            .zip(&self.labels)
            .map(|(&f, &y)| bce_with_logit(y, f).1 / n)
            .collect();
        self.head.backward(&g)?;
        let mut grads = Vec::new();
        collect_grads("base.", self.head.base(), &mut grads);
        collect_grads("learnable.", self.head.learnable(), &mut grads);
        Ok(grads)
    }
}

/// Treatment objective as the optimiser sees it: the embedding term as a
/// function of the towers plus the epinet term evaluated at the overarch
/// input `sg[x]` frozen at construction. Finite differences of this
/// surrogate are what the analytic gradients must match; perturbing a
/// tower does not move `sg[x]`.
pub struct EpinetModelLoss {
    pub model: EpinetModel,
    pub batch: Batch,
    pub index: Tensor2,
    pub terms: LossTerms,
    frozen_input: Tensor2,
}

impl EpinetModelLoss {
    pub fn new(model: EpinetModel, batch: Batch, index: Tensor2, terms: LossTerms) -> Result<Self> {
        let frozen_input = model.batch_overarch_inputs(&batch)?;
        Ok(Self {
            model,
            batch,
            index,
            terms,
            frozen_input,
        })
    }
}

impl NamedParams for EpinetModelLoss {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        self.model.visit_params(f)
    }
    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        self.model.assign_param(name, value)
    }
}

impl GradTarget for EpinetModelLoss {
    fn loss(&self) -> Result<f64> {
        let mut total = 0.0;
        if self.terms.embedding {
            total += self.model.towers().embedding_loss(&self.batch)?;
        }
        if self.terms.epinet {
            let task = self.model.epinet_task();
            let logits = self.model.head().predict(&self.frozen_input, &self.index)?;
            total += logits
                .iter()
                .enumerate()
                .map(|(r, &f)| bce_with_logit(self.batch.labels.get(r, task), f).0)
                .sum::<f64>()
                / logits.len() as f64;
        }
        Ok(total)
    }

    fn analytic(&mut self) -> Result<Vec<(String, Tensor2)>> {
        self.model.zero_grads();
        self.model.accumulate_gradients(&self.batch, &self.index, self.terms)?;
        let mut grads = Vec::new();
        collect_grads("user_tower.", self.model.towers().user_tower(), &mut grads);
        collect_grads("item_tower.", self.model.towers().item_tower(), &mut grads);
        collect_grads("head.base.", self.model.head().base(), &mut grads);
        collect_grads("head.learnable.", self.model.head().learnable(), &mut grads);
        Ok(grads)
    }
}

/// Embedding loss of the point-estimate control model.
pub struct PointModelLoss {
    pub model: PointModel,
    pub batch: Batch,
}

impl NamedParams for PointModelLoss {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor2)) {
        self.model.visit_params(f)
    }
    fn assign_param(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        self.model.assign_param(name, value)
    }
}

impl GradTarget for PointModelLoss {
    fn loss(&self) -> Result<f64> {
        self.model.loss(&self.batch)
    }

    fn analytic(&mut self) -> Result<Vec<(String, Tensor2)>> {
        for s in self.model.trainable_stores_mut() {
            s.zero_grads();
        }
        self.model.accumulate_gradients(&self.batch)?;
        let mut grads = Vec::new();
        collect_grads("user_tower.", self.model.towers().user_tower(), &mut grads);
        collect_grads("item_tower.", self.model.towers().item_tower(), &mut grads);
        Ok(grads)
    }
}

/// Replace every `*.bias` tensor with `N(0, scale²)` draws, moving hidden
/// units off the ReLU kink where central differences are meaningless.
pub fn randomize_biases(target: &mut dyn NamedParams, scale: f64, rng: &mut Rng) -> Result<()> {
    let mut biases = Vec::new();
    target.visit_params(&mut |name, t| {
        if name.ends_with(".bias") {
            biases.push((name.to_string(), t.rows(), t.cols()));
        }
    });
    for (name, r, c) in biases {
        let b = Tensor2::from_fn(r, c, |_, _| scale * rng.normal());
        target.assign_param(&name, &b)?;
    }
    Ok(())
}

fn gaussian(rng: &mut Rng, rows: usize, cols: usize) -> Tensor2 {
    Tensor2::from_fn(rows, cols, |_, _| rng.normal())
}

/// Small shape used by the standard suite.
pub fn suite_shape() -> ModelShape {
    ModelShape {
        user_features: 6,
        item_features: 5,
        embed_dim: 4,
        num_tasks: 3,
        tower_hidden: vec![8, 8],
        base_hidden: vec![8, 4],
        epinet_hidden: vec![8, 4],
        index_dim: 3,
        prior_scale: 1.0,
    }
}

/// Finite-difference checks of a dense net, an epinet head, the full
/// epinet model and the point-estimate model.
pub fn standard_suite(seed: u64, opts: &GradcheckOptions) -> Result<Vec<GradcheckReport>> {
    let mut rng = Rng::stream(seed, "gradcheck");
    let shape = suite_shape();
    let rows = 4;
    let batch = |rng: &mut Rng| Batch {
        users: gaussian(rng, rows, shape.user_features),
        items: gaussian(rng, rows, shape.item_features),
        labels: Tensor2::from_fn(rows, shape.num_tasks, |_, _| rng.uniform()),
    };
    let mut reports = Vec::new();
    let mut corrupted = false;
    // the fault goes to every component owning the named tensor
    let mut run = |component: &str, target: &mut dyn GradTarget| -> Result<GradcheckReport> {
        let mut local = opts.clone();
        if let Some(bad) = &opts.corrupt {
            let mut owns = false;
            target.visit_params(&mut |n, _| owns |= n == bad);
            corrupted |= owns;
            if !owns {
                local.corrupt = None;
            }
        }
        check(component, target, &local)
    };

    let mut net = DenseNetLoss {
        net: DenseNet::new(&[5, 8, 6, 3], &mut rng)?,
        input: gaussian(&mut rng, rows, 5),
        weights: gaussian(&mut rng, rows, 3),
    };
    randomize_biases(&mut net, 0.3, &mut rng)?;
    reports.push(run("dense_net", &mut net)?);

    let head_shape = shape.epinet_shape();
    let mut init = rng.fork("head");
    let mut prior = rng.fork("head.prior");
    let mut head = EpinetHeadLoss {
        head: EpinetHead::new(&head_shape, shape.prior_scale, &mut init, &mut prior)?,
        input: gaussian(&mut rng, rows, head_shape.input_dim),
        index: gaussian(&mut rng, 1, shape.index_dim),
        labels: (0..rows).map(|_| rng.uniform()).collect(),
    };
    randomize_biases(&mut head, 0.3, &mut rng)?;
    reports.push(run("epinet_head", &mut head)?);

    let mut init = rng.fork("model");
    let mut prior = rng.fork("model.prior");
    let mut model = EpinetModel::new(&shape, 0, &mut init, &mut prior)?;
    randomize_biases(&mut model, 0.3, &mut rng)?;
    let b = batch(&mut rng);
    let z = gaussian(&mut rng, 1, shape.index_dim);
    let mut target = EpinetModelLoss::new(model, b, z, LossTerms::BOTH)?;
    reports.push(run("epinet_model", &mut target)?);

    let mut init = rng.fork("point");
    let mut point = PointModel::new(&shape, vec![1.0, 0.5, 0.0], &mut init)?;
    randomize_biases(&mut point, 0.3, &mut rng)?;
    let b = batch(&mut rng);
    let mut target = PointModelLoss { model: point, batch: b };
    reports.push(run("point_model", &mut target)?);
    if let (Some(bad), false) = (&opts.corrupt, corrupted) {
        return Err(config_err!("cannot corrupt unknown tensor `{bad}`"));
    }
    Ok(reports)
}
