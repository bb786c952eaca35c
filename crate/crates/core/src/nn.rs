//! Dense feed-forward networks with hand-derived gradients.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{config_err, Error, Result};
use crate::rng::Rng;
use crate::tensor::{add_at_b, affine, affine_raw, axpy, mul_a_bt, Tensor2};

/// Named trainable tensors with gradient buffers of identical shape.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Tensor2>,
    grads: Vec<Tensor2>,
    adam: Option<AdamState>,
}

#[derive(Debug, Clone, PartialEq)]
struct AdamState {
    step: u64,
    m: Vec<Tensor2>,
    v: Vec<Tensor2>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor2) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(config_err!("duplicate parameter name `{name}`"));
        }
        self.grads.push(Tensor2::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.names.push(name);
        self.adam = None;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|t| t.data().len()).sum()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor2> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor2> {
        self.index_of(name).map(move |i| &mut self.values[i])
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor2> {
        self.index_of(name).map(|i| &self.grads[i])
    }

    #[inline]
    pub fn value_at(&self, i: usize) -> &Tensor2 {
        &self.values[i]
    }

    #[inline]
    pub fn value_at_mut(&mut self, i: usize) -> &mut Tensor2 {
        &mut self.values[i]
    }

    #[inline]
    pub fn grad_at(&self, i: usize) -> &Tensor2 {
        &self.grads[i]
    }

    #[inline]
    pub fn grad_at_mut(&mut self, i: usize) -> &mut Tensor2 {
        &mut self.grads[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor2, &Tensor2)> {
        self.names
            .iter()
            .zip(&self.values)
            .zip(&self.grads)
            .map(|((n, v), g)| (n.as_str(), v, g))
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    /// Replace the value of `name`, keeping its shape.
    pub fn assign(&mut self, name: &str, value: &Tensor2) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| config_err!("unknown parameter `{name}`"))?;
        if self.values[i].shape() != value.shape() {
            return Err(config_err!(
                "parameter `{name}` has shape {:?}, got {:?}",
                self.values[i].shape(),
                value.shape()
            ));
        }
        self.values[i] = value.clone();
        Ok(())
    }

    fn check_grads_finite(&self) -> Result<()> {
        for (name, _, g) in self.iter() {
            if !g.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in parameter `{name}`"
                )));
            }
        }
        Ok(())
    }

    /// Plain gradient descent: `p ← p − lr · grad`, then zero the grads.
    ///
    /// Nothing is modified when any gradient is non-finite.
    pub fn sgd_step(&mut self, learning_rate: f64) -> Result<()> {
        self.check_grads_finite()?;
        for (v, g) in self.values.iter_mut().zip(&self.grads) {
            axpy(-learning_rate, g.data(), v.data_mut());
        }
        self.zero_grads();
        Ok(())
    }

    /// Adam update with bias correction, then zero the grads.
    /// Adam step; `weight_decay` shrinks every value by `lr * weight_decay`
    /// per step, decoupled from the gradient moments.
    pub fn adam_step(&mut self, learning_rate: f64, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Result<()> {
        self.check_grads_finite()?;
        let state = self.adam.get_or_insert_with(|| AdamState {
            step: 0,
            m: self.values.iter().map(|v| Tensor2::zeros(v.rows(), v.cols())).collect(),
            v: self.values.iter().map(|v| Tensor2::zeros(v.rows(), v.cols())).collect(),
        });
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - libm::pow(beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(beta2, f64::from(t));
        for (i, value) in self.values.iter_mut().enumerate() {
            let g = self.grads[i].data();
            let m = state.m[i].data_mut();
            let v = state.v[i].data_mut();
            for (j, p) in value.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *p -= learning_rate * (mhat / (libm::sqrt(vhat) + eps) + weight_decay * *p);
            }
        }
        self.zero_grads();
        Ok(())
    }

    pub fn apply(&mut self, optimizer: &Optimizer) -> Result<()> {
        match *optimizer {
            Optimizer::Sgd { learning_rate } => self.sgd_step(learning_rate),
            Optimizer::Adam {
                learning_rate,
                beta1,
                beta2,
                eps,
                weight_decay,
            } => self.adam_step(learning_rate, beta1, beta2, eps, weight_decay),
        }
    }
}

/// Update rule applied to every trainable [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd { learning_rate: f64 },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
    },
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        Optimizer::Sgd { learning_rate }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Optimizer::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    /// Adam with decoupled weight decay.
    pub fn adamw(learning_rate: f64, weight_decay: f64) -> Self {
        Optimizer::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            Optimizer::Sgd { learning_rate } | Optimizer::Adam { learning_rate, .. } => learning_rate,
        }
    }
}

/// Glorot (Xavier) uniform weights of shape `fan_in × fan_out`.
pub fn glorot_init(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Tensor2 {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    Tensor2::from_fn(fan_in, fan_out, |_, _| rng.uniform_range(-limit, limit))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, in the overflow-free form.
///
/// Returns `(loss, d loss / d logit)`.
#[inline]
pub fn bce_with_logit(label: f64, logit: f64) -> (f64, f64) {
    let e = libm::exp(-libm::fabs(logit));
    let loss = logit.max(0.0) - logit * label + libm::log1p(e);
    // sigmoid(logit) - label, arranged so neither branch cancels catastrophically
    let grad = if logit >= 0.0 {
        ((1.0 - label) - label * e) / (1.0 + e)
    } else {
        ((1.0 - label) * e - label) / (1.0 + e)
    };
    (loss, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

/// Multi-layer perceptron: ReLU on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layer_dims: Vec<usize>,
    activation: Activation,
    params: ParameterStore,
    /// Inputs to each layer from the last caching forward pass.
    cache: Option<Vec<Tensor2>>,
}

fn weight_name(l: usize) -> String {
    format!("layer{l}.weight")
}

fn bias_name(l: usize) -> String {
    format!("layer{l}.bias")
}

impl DenseNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new(layer_dims: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::build(layer_dims, |fan_in, fan_out| glorot_init(rng, fan_in, fan_out))
    }

    /// Every weight and bias zero.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        Self::build(layer_dims, Tensor2::zeros)
    }

    fn build(layer_dims: &[usize], mut weights: impl FnMut(usize, usize) -> Tensor2) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(config_err!(
                "a network needs at least an input and an output dimension, got {layer_dims:?}"
            ));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(config_err!("layer dimensions must be positive, got {layer_dims:?}"));
        }
        let mut params = ParameterStore::new();
        for (l, pair) in layer_dims.windows(2).enumerate() {
            params.insert(weight_name(l), weights(pair[0], pair[1]))?;
            params.insert(bias_name(l), Tensor2::zeros(1, pair[1]))?;
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            activation: Activation::Relu,
            params,
            cache: None,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two dims")
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn weight(&self, l: usize) -> &Tensor2 {
        self.params.value_at(2 * l)
    }

    pub fn bias(&self, l: usize) -> &Tensor2 {
        self.params.value_at(2 * l + 1)
    }

    fn check_input(&self, input: &Tensor2) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(config_err!(
                "network expects {} input features, got {}",
                self.input_dim(),
                input.cols()
            ));
        }
        Ok(())
    }

    /// Forward pass without caching anything for backward.
    pub fn predict(&self, input: &Tensor2) -> Result<Tensor2> {
        self.check_input(input)?;
        let last = self.num_layers() - 1;
        let mut h = affine(input, self.weight(0), self.bias(0));
        for l in 1..=last {
            relu_in_place(&mut h);
            h = affine(&h, self.weight(l), self.bias(l));
        }
        Ok(h)
    }

    /// [`DenseNet::predict`] for inputs that agree everywhere except in one
    /// block of columns. Row `r` of the effective input is `fixed` with
    /// columns `start..start + varying.cols()` replaced by `varying.row(r)`.
    /// The shared part of the first layer is computed once.
    pub fn predict_partitioned(&self, fixed: &[f64], start: usize, varying: &Tensor2) -> Result<Tensor2> {
        let n_in = self.input_dim();
        let k = varying.cols();
        if fixed.len() != n_in || start + k > n_in {
            return Err(config_err!(
                "partitioned input ({} fixed, block {start}..{}) does not fit {n_in} features",
                fixed.len(),
                start + k
            ));
        }
        let w0 = self.weight(0);
        let n_out = w0.cols();
        let mut offset = self.bias(0).data().to_vec();
        for (i, &a) in fixed.iter().enumerate() {
            if (start..start + k).contains(&i) || a == 0.0 {
                continue;
            }
            axpy(a, w0.row(i), &mut offset);
        }
        let block = &w0.data()[start * n_out..(start + k) * n_out];
        let mut h = affine_raw(varying.data(), varying.rows(), block, n_out, &offset);
        for l in 1..self.num_layers() {
            relu_in_place(&mut h);
            h = affine(&h, self.weight(l), self.bias(l));
        }
        Ok(h)
    }

    /// Forward pass that remembers layer inputs for [`DenseNet::backward`].
    pub fn forward(&mut self, input: &Tensor2) -> Result<Tensor2> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut h = input.clone();
        for l in 0..self.num_layers() {
            let mut out = affine(&h, self.weight(l), self.bias(l));
            if l + 1 < self.num_layers() {
                relu_in_place(&mut out);
            }
            inputs.push(h);
            h = out;
        }
        self.cache = Some(inputs);
        Ok(h)
    }

    /// Accumulates parameter gradients and returns the gradient with
    /// respect to the input of the cached forward pass.
    pub fn backward(&mut self, upstream: &Tensor2) -> Result<Tensor2> {
        self.backward_impl(upstream, true)
            .map(|g| g.expect("input gradient requested"))
    }

    /// Like [`DenseNet::backward`] but skips the input-gradient product.
    pub fn backward_params(&mut self, upstream: &Tensor2) -> Result<()> {
        self.backward_impl(upstream, false).map(|_| ())
    }

    fn backward_impl(&mut self, upstream: &Tensor2, want_input_grad: bool) -> Result<Option<Tensor2>> {
        let inputs = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called before forward".to_string()))?;
        let batch = inputs[0].rows();
        if upstream.shape() != (batch, self.output_dim()) {
            return Err(config_err!(
                "upstream gradient has shape {:?}, expected {:?}",
                upstream.shape(),
                (batch, self.output_dim())
            ));
        }
        let mut g = upstream.clone();
        for l in (0..self.num_layers()).rev() {
            let x = &inputs[l];
            let (wi, bi) = (2 * l, 2 * l + 1);
            add_at_b(x, &g, &mut self.params.grads[wi]);
            let db = self.params.grads[bi].data_mut();
            for b in 0..batch {
                axpy(1.0, g.row(b), db);
            }
            if l == 0 && !want_input_grad {
                return Ok(None);
            }
            let mut gin = mul_a_bt(&g, &self.params.values[wi]);
            if l > 0 {
                // ReLU mask of the previous layer; the raw input has none
                for (gv, &xv) in gin.data_mut().iter_mut().zip(x.data()) {
                    if xv <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            g = gin;
        }
        Ok(Some(g))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

fn relu_in_place(t: &mut Tensor2) {
    t.data_mut().iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
}
