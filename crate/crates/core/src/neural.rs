//! Dense feed-forward networks with exact backpropagation and momentum SGD.
//!
//! One engine serves the detector (softmax head), the discriminator (sigmoid
//! head) and the generator (linear head). Everything is `f64`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textfmt::{self, write_row};

const MAGIC: &str = "gids-mlp v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Linear => "linear",
        }
    }

    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Tanh => z.mapv(f64::tanh),
            Activation::Sigmoid => z.mapv(sigmoid),
            Activation::Linear => z.clone(),
            Activation::Softmax => softmax_rows(z),
        }
    }

    /// Multiplies `grad` in place by the elementwise derivative at `z`.
    /// Not defined for softmax, which only appears as an output paired with its loss.
    fn backprop(self, z: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad).and(z).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(grad).and(z).for_each(|g, &z| {
                let t = z.tanh();
                *g *= 1.0 - t * t;
            }),
            Activation::Sigmoid => Zip::from(grad).and(z).for_each(|g, &z| {
                let s = sigmoid(z);
                *g *= s * (1.0 - s);
            }),
            Activation::Linear | Activation::Softmax => {}
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softmax" => Ok(Activation::Softmax),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::parse("activation", format!("unknown activation `{other}`"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn log_softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Loss functions, each tied to the output activation it is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean categorical cross-entropy of a softmax head.
    CrossEntropy,
    /// Mean binary cross-entropy of a sigmoid head, computed from logits.
    BinaryCrossEntropy,
}

impl Loss {
    fn expected_output(self) -> Activation {
        match self {
            Loss::CrossEntropy => Activation::Softmax,
            Loss::BinaryCrossEntropy => Activation::Sigmoid,
        }
    }

    /// Mean loss over rows and its gradient with respect to the logits.
    fn value_and_logit_grad(self, logits: &Array2<f64>, targets: ArrayView2<'_, f64>) -> (f64, Array2<f64>) {
        let n = logits.nrows().max(1) as f64;
        match self {
            Loss::CrossEntropy => {
                let logp = log_softmax_rows(logits);
                let loss = -(&logp * &targets).sum() / n;
                let mut grad = logp.mapv(f64::exp);
                for (mut g, t) in grad.rows_mut().into_iter().zip(targets.rows()) {
                    let mass = t.sum();
                    Zip::from(&mut g).and(&t).for_each(|g, &t| *g = (*g * mass - t) / n);
                }
                (loss, grad)
            }
            Loss::BinaryCrossEntropy => {
                let mut loss = 0.0;
                let mut grad = logits.clone();
                Zip::from(&mut grad).and(&targets).for_each(|g, &y| {
                    let z = *g;
                    loss += softplus(z) - y * z;
                    *g = (sigmoid(z) - y) / n;
                });
                (loss / n, grad)
            }
        }
    }
}

/// One affine layer: `out = in · Wᵀ + b`, with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden: Activation,
    output: Activation,
    seed: u64,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer (the batch itself first).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn logits(&self) -> &Array2<f64> {
        self.pre.last().expect("at least one layer")
    }

    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }
}

/// Parameter-shaped gradient (or velocity) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    /// Weights (row-major) then bias, layer by layer; same order as [`Mlp::params`].
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weights.iter());
        out.extend(l.bias.iter());
    }
    out
}

impl Mlp {
    /// Glorot-uniform weights, zero biases; deterministic under `seed`.
    pub fn new(layer_dims: &[usize], hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        let mut mlp = Self::zeros(layer_dims, hidden, output)?;
        mlp.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut mlp.layers {
            let bound = (6.0 / (layer.in_dim() + layer.out_dim()) as f64).sqrt();
            layer.weights.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(mlp)
    }

    /// All parameters zero.
    pub fn zeros(layer_dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least 2 layer sizes, got {}",
                layer_dims.len()
            )));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if hidden == Activation::Softmax {
            return Err(Error::Config("softmax is only supported as an output activation".into()));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense {
                weights: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            layers,
            hidden,
            output,
            seed: 0,
        })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Dense::out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::out_dim)
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap_or_default());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap_or_default());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, batch: &ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, batch has {}",
                self.input_dim(),
                batch.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&batch)?;
        let mut a = batch.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights.t()) + &layer.bias;
            a = if i == last { self.output.apply(&z) } else { self.hidden.apply(&z) };
        }
        Ok(a)
    }

    pub fn trace(&self, batch: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
        self.check_input(&batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = batch.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.weights.t()) + &layer.bias;
            let next = if i == last { self.output.apply(&z) } else { self.hidden.apply(&z) };
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        Ok(ForwardTrace {
            inputs,
            pre,
            output: a,
        })
    }

    /// Backpropagates `d_logits` (gradient w.r.t. the output layer's
    /// pre-activation) and returns parameter gradients plus the gradient w.r.t. the input.
    pub fn backward(&self, trace: &ForwardTrace, d_logits: Array2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_logits;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let weights = delta.t().dot(&trace.inputs[i]);
            let bias = delta.sum_axis(Axis(0));
            grads.push(Dense { weights, bias });
            let mut d_in = delta.dot(&layer.weights);
            if i > 0 {
                self.hidden.backprop(&trace.pre[i - 1], &mut d_in);
            }
            delta = d_in;
        }
        grads.reverse();
        (Gradients { layers: grads }, delta)
    }

    fn check_loss(&self, loss: Loss, targets: &ArrayView2<'_, f64>, rows: usize) -> Result<()> {
        if self.output != loss.expected_output() {
            return Err(Error::Config(format!(
                "{loss:?} requires a {} output, network has {}",
                loss.expected_output(),
                self.output
            )));
        }
        if targets.dim() != (rows, self.output_dim()) {
            return Err(Error::Shape(format!(
                "targets are {:?}, expected ({rows}, {})",
                targets.dim(),
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Mean loss over the batch.
    pub fn loss(&self, batch: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, loss: Loss) -> Result<f64> {
        self.check_loss(loss, &targets, batch.nrows())?;
        let trace = self.trace(batch)?;
        Ok(loss.value_and_logit_grad(trace.logits(), targets).0)
    }

    /// Mean loss over the batch and its exact gradient.
    pub fn loss_and_gradients(
        &self,
        batch: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
        loss: Loss,
    ) -> Result<(f64, Gradients)> {
        self.check_loss(loss, &targets, batch.nrows())?;
        let trace = self.trace(batch)?;
        let (value, d_logits) = loss.value_and_logit_grad(trace.logits(), targets);
        let (grads, _) = self.backward(&trace, d_logits);
        Ok((value, grads))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC}\n");
        let dims: Vec<String> = self.layer_dims().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "[mlp {} {} {}]", self.hidden, self.output, self.seed);
        let _ = writeln!(out, "{}", dims.join(" "));
        for (i, l) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "[weights {i} {} {}]", l.out_dim(), l.in_dim());
            for row in l.weights.rows() {
                write_row(&mut out, row.iter().copied());
            }
            let _ = writeln!(out, "[bias {i}]");
            write_row(&mut out, l.bias.iter().copied());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let sections = textfmt::read_sections(text, MAGIC)?;
        let header = textfmt::find(&sections, "mlp")?;
        let hidden: Activation = header.arg::<String>(0)?.parse()?;
        let output: Activation = header.arg::<String>(1)?.parse()?;
        let seed: u64 = header.arg(2)?;
        let dims = header
            .lines
            .first()
            .ok_or_else(|| Error::parse("mlp", "missing layer sizes"))?
            .split_whitespace()
            .map(|d| d.parse::<usize>().map_err(|_| Error::parse("mlp", format!("bad size `{d}`"))))
            .collect::<Result<Vec<_>>>()?;
        let mut mlp = Self::zeros(&dims, hidden, output)?;
        mlp.seed = seed;
        let weight_sections: Vec<_> = sections.iter().filter(|s| s.name == "weights").collect();
        let bias_sections: Vec<_> = sections.iter().filter(|s| s.name == "bias").collect();
        if weight_sections.len() != mlp.layers.len() || bias_sections.len() != mlp.layers.len() {
            return Err(Error::parse("mlp", "layer count does not match the declared sizes"));
        }
        for (i, layer) in mlp.layers.iter_mut().enumerate() {
            let rows = weight_sections[i].numbers()?;
            let flat: Vec<f64> = rows.concat();
            if rows.len() != layer.out_dim() || flat.len() != layer.weights.len() {
                return Err(Error::parse("weights", format!("layer {i} has the wrong shape")));
            }
            layer.weights = Array2::from_shape_vec(layer.weights.raw_dim(), flat)
                .map_err(|e| Error::parse("weights", e.to_string()))?;
            let bias = bias_sections[i].single_row()?;
            if bias.len() != layer.out_dim() {
                return Err(Error::parse("bias", format!("layer {i} has the wrong length")));
            }
            layer.bias = Array1::from(bias);
        }
        Ok(mlp)
    }
}

/// One-hot encoding of class ids.
pub fn one_hot(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), classes));
    for (i, &l) in labels.iter().enumerate() {
        out[[i, l]] = 1.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascend,
    Descend,
}

/// Minibatch gradient steps with classical momentum: `v <- μv + g`, `θ <- θ ∓ lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Gradients,
}

impl Sgd {
    pub fn new(mlp: &Mlp, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {learning_rate} must be positive")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(Self {
            learning_rate,
            momentum,
            velocity: Gradients::zeros_like(mlp),
        })
    }

    pub fn step(&mut self, mlp: &mut Mlp, grads: &Gradients, direction: Direction) -> Result<()> {
        if grads.layers.len() != mlp.layers.len()
            || grads
                .layers
                .iter()
                .zip(&mlp.layers)
                .any(|(g, l)| g.weights.dim() != l.weights.dim() || g.bias.len() != l.bias.len())
        {
            return Err(Error::Shape("gradient shapes do not match the network".into()));
        }
        if let Some(layer) = grads
            .layers
            .iter()
            .position(|g| !g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
        {
            return Err(Error::NonFinite { layer });
        }
        let signed_lr = match direction {
            Direction::Ascend => self.learning_rate,
            Direction::Descend => -self.learning_rate,
        };
        for ((v, g), layer) in self.velocity.layers.iter_mut().zip(&grads.layers).zip(&mut mlp.layers) {
            Zip::from(&mut v.weights).and(&g.weights).for_each(|v, &g| *v = self.momentum * *v + g);
            Zip::from(&mut v.bias).and(&g.bias).for_each(|v, &g| *v = self.momentum * *v + g);
            layer.weights.scaled_add(signed_lr, &v.weights);
            layer.bias.scaled_add(signed_lr, &v.bias);
        }
        Ok(())
    }
}

/// Optimizer and schedule settings for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            epochs: 100,
            seed: 0,
            hidden_layers: vec![50, 50],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}
