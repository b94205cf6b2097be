//! Dense networks with exact reverse-mode gradients.
//!
//! A [`DenseNet`] is a stack of affine layers `z = W a + b`. Hidden layers
//! apply the network's [`Activation`]; the output layer is linear. Weights
//! are stored row-major with shape `(out_dim, in_dim)`.
//!
//! The only loss the rest of the crate needs is the batch-mean squared L2
//! error, so [`mse_loss_and_grads`] hand-codes its backward pass instead of
//! going through a general autodiff tape. [`finite_diff_check`] audits it
//! against central differences.

use std::fmt;

use rand::Rng;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Location of a single scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamIndex {
    pub layer: usize,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight { row: usize, col: usize },
    Bias { row: usize },
}

impl fmt::Display for ParamIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ParamKind::Weight { row, col } => write!(f, "layer{}.weight[{row},{col}]", self.layer),
            ParamKind::Bias { row } => write!(f, "layer{}.bias[{row}]", self.layer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
}

impl DenseNet {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn new_random<R: Rng + ?Sized>(
        layer_dims: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, activation)?;
        for (l, &fan_in) in layer_dims[..net.num_layers()].iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in net.weights[l].iter_mut() {
                *w = rng.random_range(-bound..=bound);
            }
            for b in net.biases[l].iter_mut() {
                *b = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_dims: &[usize], activation: Activation) -> Result<Self> {
        validate_dims(layer_dims)?;
        let weights = layer_dims
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_dims[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    /// Builds a network from explicit row-major weight matrices and biases.
    pub fn from_parts(
        layer_dims: &[usize],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::shape(format!(
                "expected {layers} weight/bias blocks, got {}/{}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..layers {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            if weights[l].len() != fan_in * fan_out || biases[l].len() != fan_out {
                return Err(Error::shape(format!(
                    "layer {l}: expected {fan_out}x{fan_in} weights and {fan_out} biases"
                )));
            }
        }
        let net = Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
        };
        if let Some((idx, value)) = net.iter_params().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numeric {
                path: idx.to_string(),
                value,
            });
        }
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn param(&self, idx: ParamIndex) -> f64 {
        *param_ref(&self.weights, &self.biases, &self.layer_dims, idx)
    }

    pub fn set_param(&mut self, idx: ParamIndex, value: f64) {
        *param_mut(&mut self.weights, &mut self.biases, &self.layer_dims, idx) = value;
    }

    /// All parameter locations in a fixed order: per layer, weights then biases.
    pub fn param_indices(&self) -> Vec<ParamIndex> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.layer_dims[layer], self.layer_dims[layer + 1]);
            for row in 0..fan_out {
                for col in 0..fan_in {
                    out.push(ParamIndex {
                        layer,
                        kind: ParamKind::Weight { row, col },
                    });
                }
            }
            for row in 0..fan_out {
                out.push(ParamIndex {
                    layer,
                    kind: ParamKind::Bias { row },
                });
            }
        }
        out
    }

    pub fn iter_params(&self) -> impl Iterator<Item = (ParamIndex, f64)> + '_ {
        self.param_indices().into_iter().map(|i| (i, self.param(i)))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut trace = Trace::new(&self.layer_dims);
        self.forward_into(input, &mut trace);
        Ok(trace.output().to_vec())
    }

    fn forward_into(&self, input: &[f64], trace: &mut Trace) {
        trace.acts[0].copy_from_slice(input);
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let fan_in = self.layer_dims[l];
            let (prev, rest) = trace.acts.split_at_mut(l + 1);
            let a_in = &prev[l];
            let a_out = &mut rest[0];
            let z_out = &mut trace.pre[l];
            let w = &self.weights[l];
            for (r, (z, b)) in z_out.iter_mut().zip(&self.biases[l]).enumerate() {
                let row = &w[r * fan_in..(r + 1) * fan_in];
                *z = b + dot(row, a_in);
            }
            if l == last {
                a_out.copy_from_slice(z_out);
            } else {
                for (a, &z) in a_out.iter_mut().zip(z_out.iter()) {
                    *a = self.activation.apply(z);
                }
            }
        }
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::shape("a network needs at least an input and an output layer"));
    }
    if layer_dims.contains(&0) {
        return Err(Error::shape(format!("zero-width layer in {layer_dims:?}")));
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn param_ref<'a>(
    weights: &'a [Vec<f64>],
    biases: &'a [Vec<f64>],
    dims: &[usize],
    idx: ParamIndex,
) -> &'a f64 {
    match idx.kind {
        ParamKind::Weight { row, col } => &weights[idx.layer][row * dims[idx.layer] + col],
        ParamKind::Bias { row } => &biases[idx.layer][row],
    }
}

fn param_mut<'a>(
    weights: &'a mut [Vec<f64>],
    biases: &'a mut [Vec<f64>],
    dims: &[usize],
    idx: ParamIndex,
) -> &'a mut f64 {
    match idx.kind {
        ParamKind::Weight { row, col } => &mut weights[idx.layer][row * dims[idx.layer] + col],
        ParamKind::Bias { row } => &mut biases[idx.layer][row],
    }
}

/// Per-layer pre-activations and activations of one forward pass.
struct Trace {
    pre: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
}

impl Trace {
    fn new(dims: &[usize]) -> Self {
        Self {
            pre: dims[1..].iter().map(|&n| vec![0.0; n]).collect(),
            acts: dims.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

/// Parameter-shaped values, used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layer_dims: net.layer_dims.clone(),
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn get(&self, idx: ParamIndex) -> f64 {
        *param_ref(&self.weights, &self.biases, &self.layer_dims, idx)
    }

    pub fn get_mut(&mut self, idx: ParamIndex) -> &mut f64 {
        param_mut(&mut self.weights, &mut self.biases, &self.layer_dims, idx)
    }

    fn matches(&self, net: &DenseNet) -> bool {
        self.layer_dims == net.layer_dims
            && self.weights.iter().zip(&net.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&net.biases).all(|(a, b)| a.len() == b.len())
    }

    fn blocks(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.weights.iter().chain(&self.biases)
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

/// Batch-mean squared L2 error and its exact gradient.
///
/// `loss = (1/B) * sum_b ||net(inputs[b]) - targets[b]||^2`.
pub fn mse_loss_and_grads(
    net: &DenseNet,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, Gradients)> {
    check_batch(net, inputs, targets)?;
    let mut grads = Gradients::zeros_like(net);
    let loss = accumulate(net, inputs, targets, Some(&mut grads));
    Ok((loss, grads))
}

/// Same loss as [`mse_loss_and_grads`] without the backward pass.
pub fn mse_loss(net: &DenseNet, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    check_batch(net, inputs, targets)?;
    Ok(accumulate(net, inputs, targets, None))
}

fn check_batch(net: &DenseNet, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    for (x, y) in inputs.iter().zip(targets) {
        if x.len() != net.input_dim() || y.len() != net.output_dim() {
            return Err(Error::shape(format!(
                "batch item has dims ({}, {}), network is {}->{}",
                x.len(),
                y.len(),
                net.input_dim(),
                net.output_dim()
            )));
        }
    }
    Ok(())
}

fn accumulate(
    net: &DenseNet,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    mut grads: Option<&mut Gradients>,
) -> f64 {
    let scale = 1.0 / inputs.len() as f64;
    let dims = &net.layer_dims;
    let mut trace = Trace::new(dims);
    let mut delta: Vec<Vec<f64>> = dims[1..].iter().map(|&n| vec![0.0; n]).collect();
    let mut total = 0.0;

    for (x, target) in inputs.iter().zip(targets) {
        net.forward_into(x, &mut trace);
        let out = trace.output();
        let last = net.num_layers() - 1;
        for ((d, &o), &t) in delta[last].iter_mut().zip(out).zip(target) {
            let r = o - t;
            total += r * r;
            *d = 2.0 * r * scale;
        }
        let Some(g) = grads.as_deref_mut() else {
            continue;
        };
        for l in (0..net.num_layers()).rev() {
            let fan_in = dims[l];
            let a_in = &trace.acts[l];
            let gw = &mut g.weights[l];
            for (r, &d) in delta[l].iter().enumerate() {
                g.biases[l][r] += d;
                if d != 0.0 {
                    for (gw, &a) in gw[r * fan_in..(r + 1) * fan_in].iter_mut().zip(a_in) {
                        *gw += d * a;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let (lower, upper) = delta.split_at_mut(l);
            let below = &mut lower[l - 1];
            below.iter_mut().for_each(|v| *v = 0.0);
            let w = &net.weights[l];
            for (r, &d) in upper[0].iter().enumerate() {
                if d != 0.0 {
                    for (b, &wv) in below.iter_mut().zip(&w[r * fan_in..(r + 1) * fan_in]) {
                        *b += wv * d;
                    }
                }
            }
            for ((b, &z), &a) in below.iter_mut().zip(&trace.pre[l - 1]).zip(&trace.acts[l]) {
                *b *= net.activation.derivative(z, a);
            }
        }
    }
    total * scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Gradients,
    second: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Result<Self> {
        let AdamConfig { lr, beta1, beta2, eps } = config;
        let positive = [lr, beta1, beta2, eps].iter().all(|v| v.is_finite() && *v > 0.0);
        if !positive || beta1 >= 1.0 || beta2 >= 1.0 {
            return Err(Error::invalid(format!("bad Adam hyperparameters {config:?}")));
        }
        Ok(Self {
            config,
            first: Gradients::zeros_like(net),
            second: Gradients::zeros_like(net),
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Nothing is modified if any gradient
/// component is non-finite.
pub fn adam_step(net: &mut DenseNet, state: &mut AdamState, grads: &Gradients) -> Result<()> {
    if !grads.matches(net) || !state.first.matches(net) {
        return Err(Error::shape("gradients are not shaped like the network"));
    }
    for idx in net.param_indices() {
        let g = grads.get(idx);
        if !g.is_finite() {
            return Err(Error::Numeric {
                path: idx.to_string(),
                value: g,
            });
        }
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    let params = net.weights.iter_mut().chain(net.biases.iter_mut());
    let moments = state.first.blocks_mut().zip(state.second.blocks_mut());
    for ((p, g), (m, v)) in params.zip(grads.blocks()).zip(moments) {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: ParamIndex,
    pub checked: usize,
    /// Parameters whose gradient magnitudes were both below the fallback
    /// threshold and were therefore scored by absolute error.
    pub absolute_fallbacks: usize,
}

pub const FD_STEP: f64 = 1e-5;
pub const ABSOLUTE_FALLBACK: f64 = 1e-8;

/// Error measure between an analytic and a numeric derivative.
pub fn gradient_error(analytic: f64, numeric: f64) -> (f64, bool) {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale < ABSOLUTE_FALLBACK {
        (diff, true)
    } else {
        (diff / scale, false)
    }
}

/// Audits [`mse_loss_and_grads`] on every parameter of `net`.
pub fn finite_diff_check(
    net: &DenseNet,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<GradCheckReport> {
    let (_, analytic) = mse_loss_and_grads(net, inputs, targets)?;
    compare_gradients(net, inputs, targets, &analytic, &net.param_indices())
}

/// Like [`finite_diff_check`] but on a random subset of at least 100
/// parameters (or all of them, for smaller networks).
pub fn finite_diff_check_subset<R: Rng + ?Sized>(
    net: &DenseNet,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    count: usize,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let all = net.param_indices();
    let count = count.max(100).min(all.len());
    let picked: Vec<_> = index::sample(rng, all.len(), count)
        .into_iter()
        .map(|i| all[i])
        .collect();
    let (_, analytic) = mse_loss_and_grads(net, inputs, targets)?;
    compare_gradients(net, inputs, targets, &analytic, &picked)
}

/// Compares a supplied gradient against central differences of the MSE loss.
pub fn compare_gradients(
    net: &DenseNet,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    analytic: &Gradients,
    params: &[ParamIndex],
) -> Result<GradCheckReport> {
    if !analytic.matches(net) {
        return Err(Error::shape("gradients are not shaped like the network"));
    }
    let Some(&first) = params.first() else {
        return Err(Error::invalid("no parameters to check"));
    };
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: first,
        checked: 0,
        absolute_fallbacks: 0,
    };
    for &idx in params {
        let original = probe.param(idx);
        probe.set_param(idx, original + FD_STEP);
        let plus = mse_loss(&probe, inputs, targets)?;
        probe.set_param(idx, original - FD_STEP);
        let minus = mse_loss(&probe, inputs, targets)?;
        probe.set_param(idx, original);

        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let (err, fallback) = gradient_error(analytic.get(idx), numeric);
        report.checked += 1;
        report.absolute_fallbacks += usize::from(fallback);
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_parameter = idx;
        }
    }
    Ok(report)
}
