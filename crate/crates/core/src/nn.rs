//! Feed-forward network substrate: a ReLU MLP with a softmax cross-entropy
//! head, mini-batch Adam, and the flattened parameter vectors that every
//! other module exchanges, compares and aggregates.
//!
//! Parameters live in one flat buffer in *layer-major* order: for each layer,
//! the weight matrix (`outputs x inputs`, row-major) followed by the bias.
//! Flattening is therefore a copy and unflattening a length check.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::math;
use crate::rng;
use crate::{Error, Result};

/// Rows per forward pass when only evaluating.
const EVAL_CHUNK: usize = 256;

/// Flattened model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(dot(&self.0, &self.0))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

/// Position of one layer inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerShape {
    pub fn weight_range(&self) -> core::ops::Range<usize> {
        self.weight_offset..self.bias_offset
    }

    pub fn bias_range(&self) -> core::ops::Range<usize> {
        self.bias_offset..self.bias_offset + self.outputs
    }

    /// Weights and bias together.
    pub fn range(&self) -> core::ops::Range<usize> {
        self.weight_offset..self.bias_offset + self.outputs
    }
}

/// Multilayer perceptron: ReLU on hidden layers, linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: Vec<usize>,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
}

impl Mlp {
    /// All-zero model for `arch`.
    pub fn zeros(arch: &[usize]) -> Result<Self> {
        let shapes = layer_shapes(arch)?;
        let total = shapes.last().map(|s| s.bias_offset + s.outputs).unwrap_or(0);
        Ok(Mlp {
            arch: arch.to_vec(),
            shapes,
            params: vec![0.0; total],
        })
    }

    pub fn arch(&self) -> &[usize] {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_width(&self) -> usize {
        self.arch[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.arch.last().expect("arch has at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.params[self.shapes[layer].weight_range()]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.shapes[layer].weight_range();
        &mut self.params[r]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        &self.params[self.shapes[layer].bias_range()]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.shapes[layer].bias_range();
        &mut self.params[r]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.n_features() != self.input_width() {
            return Err(Error::DimensionMismatch {
                what: "feature width vs model input",
                expected: self.input_width(),
                actual: data.n_features(),
            });
        }
        if let Some(&label) = data.labels().iter().find(|&&l| l >= self.num_classes()) {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: self.num_classes(),
            });
        }
        Ok(())
    }
}

fn layer_shapes(arch: &[usize]) -> Result<Vec<LayerShape>> {
    if arch.len() < 2 {
        return Err(Error::InvalidArch(alloc::format!(
            "need at least 2 layer sizes, got {}",
            arch.len()
        )));
    }
    if let Some(pos) = arch.iter().position(|&s| s == 0) {
        return Err(Error::InvalidArch(alloc::format!("layer {pos} has size 0")));
    }
    let mut offset = 0;
    Ok(arch
        .windows(2)
        .map(|w| {
            let shape = LayerShape {
                inputs: w[0],
                outputs: w[1],
                weight_offset: offset,
                bias_offset: offset + w[0] * w[1],
            };
            offset = shape.bias_offset + w[1];
            shape
        })
        .collect())
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_model(arch: &[usize], seed: u64) -> Result<Mlp> {
    let mut model = Mlp::zeros(arch)?;
    let mut rng = rng::seeded(seed);
    for l in 0..model.shapes.len() {
        let s = model.shapes[l];
        let bound = math::sqrt(6.0 / (s.inputs + s.outputs) as f64);
        for w in model.weights_mut(l) {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(model)
}

/// Adam hyperparameters and the local training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs_per_round: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs_per_round: 3,
            batch_size: 64,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("training.learning_rate", "a finite value > 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("training.beta1", "a value in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("training.beta2", "a value in [0, 1)"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::config("training.epsilon", "a value > 0"));
        }
        if self.epochs_per_round < 1 {
            return Err(Error::config("training.epochs_per_round", "an integer >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("training.batch_size", "an integer >= 1"));
        }
        Ok(())
    }
}

/// Per-batch activation buffers, reused across steps.
struct Workspace {
    /// `acts[0]` is the input batch, `acts[l]` the output of layer `l - 1`
    /// (post-ReLU for hidden layers, logits for the last).
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(arch: &[usize], rows: usize) -> Self {
        Workspace {
            acts: arch.iter().map(|&w| vec![0.0; w * rows]).collect(),
            deltas: arch.iter().map(|&w| vec![0.0; w * rows]).collect(),
        }
    }

    fn load_rows(&mut self, data: &Dataset, rows: &[usize]) {
        let d = data.n_features();
        let input = &mut self.acts[0];
        for (i, &r) in rows.iter().enumerate() {
            input[i * d..(i + 1) * d].copy_from_slice(data.row(r));
        }
    }
}

impl Mlp {
    /// Forward pass over the first `rows` rows loaded into `ws.acts[0]`.
    fn forward(&self, ws: &mut Workspace, rows: usize) {
        let last = self.shapes.len() - 1;
        for (l, s) in self.shapes.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let x = &before[l][..rows * s.inputs];
            let out = &mut after[0][..rows * s.outputs];
            let bias = &self.params[s.bias_range()];
            for row in out.chunks_exact_mut(s.outputs) {
                row.copy_from_slice(bias);
            }
            let w = &self.params[s.weight_range()];
            // out(rows x outputs) += x(rows x inputs) * W^T
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    s.inputs,
                    s.outputs,
                    1.0,
                    x.as_ptr(),
                    s.inputs as isize,
                    1,
                    w.as_ptr(),
                    1,
                    s.inputs as isize,
                    1.0,
                    out.as_mut_ptr(),
                    s.outputs as isize,
                    1,
                );
            }
            if l != last {
                for v in out.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Backward pass; `ws.deltas[last]` must hold dLoss/dLogits. Gradients
    /// are written (not accumulated) into `grad`, laid out like `params`.
    fn backward(&self, ws: &mut Workspace, rows: usize, grad: &mut [f64]) {
        for l in (0..self.shapes.len()).rev() {
            let s = self.shapes[l];
            let dz = &ws.deltas[l + 1][..rows * s.outputs];
            let a = &ws.acts[l][..rows * s.inputs];
            let (gw, gb) = grad[s.range()].split_at_mut(s.inputs * s.outputs);
            // dW(outputs x inputs) = dZ^T * A
            unsafe {
                matrixmultiply::dgemm(
                    s.outputs,
                    rows,
                    s.inputs,
                    1.0,
                    dz.as_ptr(),
                    1,
                    s.outputs as isize,
                    a.as_ptr(),
                    s.inputs as isize,
                    1,
                    0.0,
                    gw.as_mut_ptr(),
                    s.inputs as isize,
                    1,
                );
            }
            gb.fill(0.0);
            for row in dz.chunks_exact(s.outputs) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            let (lower, upper) = ws.deltas.split_at_mut(l + 1);
            let dz = &upper[0][..rows * s.outputs];
            let da = &mut lower[l][..rows * s.inputs];
            let w = &self.params[s.weight_range()];
            // dA(rows x inputs) = dZ * W
            unsafe {
                matrixmultiply::dgemm(
                    rows,
                    s.outputs,
                    s.inputs,
                    1.0,
                    dz.as_ptr(),
                    s.outputs as isize,
                    1,
                    w.as_ptr(),
                    s.inputs as isize,
                    1,
                    0.0,
                    da.as_mut_ptr(),
                    s.inputs as isize,
                    1,
                );
            }
            // ReLU mask: activation > 0 iff pre-activation > 0.
            for (d, &act) in da.iter_mut().zip(&ws.acts[l][..rows * s.inputs]) {
                if act <= 0.0 {
                    *d = 0.0;
                }
            }
        }
    }
}

/// Softmax cross-entropy over `rows` logit rows. Returns the summed loss and,
/// when `delta` is given, writes `(softmax - onehot) * scale` into it.
fn softmax_xent(
    logits: &[f64],
    labels: impl Iterator<Item = usize>,
    classes: usize,
    mut delta: Option<(&mut [f64], f64)>,
) -> f64 {
    let mut total = 0.0;
    for (r, y) in labels.enumerate() {
        let z = &logits[r * classes..(r + 1) * classes];
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|&v| math::exp(v - max)).sum();
        let lse = max + math::ln(sum);
        total += lse - z[y];
        if let Some((d, scale)) = delta.as_mut() {
            let dr = &mut d[r * classes..(r + 1) * classes];
            for (k, out) in dr.iter_mut().enumerate() {
                let p = math::exp(z[k] - lse);
                *out = (p - if k == y { 1.0 } else { 0.0 }) * *scale;
            }
        }
    }
    total
}

/// Mean cross-entropy and its gradient over the whole dataset.
pub fn loss_and_gradient(model: &Mlp, data: &Dataset) -> Result<(f64, ParamVector)> {
    model.check_data(data)?;
    let rows = data.len();
    let classes = model.num_classes();
    let mut ws = Workspace::new(&model.arch, rows);
    let all: Vec<usize> = (0..rows).collect();
    ws.load_rows(data, &all);
    model.forward(&mut ws, rows);
    let last = model.shapes.len();
    let scale = 1.0 / rows as f64;
    let loss = softmax_xent(
        &ws.acts[last][..rows * classes],
        data.labels().iter().copied(),
        classes,
        Some((&mut ws.deltas[last][..rows * classes], scale)),
    );
    let mut grad = vec![0.0; model.num_params()];
    model.backward(&mut ws, rows, &mut grad);
    Ok((loss * scale, ParamVector(grad)))
}

/// Runs `cfg.epochs_per_round` epochs of mini-batch Adam on mean
/// cross-entropy, starting from a copy of `model` with fresh optimizer state.
/// Batch order is reshuffled every epoch from a stream seeded by `seed`.
pub fn train_local(model: &Mlp, train: &Dataset, cfg: &OptimizerConfig, seed: u64) -> Result<Mlp> {
    cfg.validate()?;
    model.check_data(train)?;
    let mut out = model.clone();
    let n = train.len();
    let batch = cfg.batch_size.min(n);
    let classes = out.num_classes();
    let last = out.shapes.len();
    let mut ws = Workspace::new(&out.arch, batch);
    let mut grad = vec![0.0; out.num_params()];
    let mut m = vec![0.0; out.num_params()];
    let mut v = vec![0.0; out.num_params()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::seeded(seed);
    let mut step: i32 = 0;

    for _ in 0..cfg.epochs_per_round {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let rows = chunk.len();
            ws.load_rows(train, chunk);
            out.forward(&mut ws, rows);
            softmax_xent(
                &ws.acts[last][..rows * classes],
                chunk.iter().map(|&i| train.label(i)),
                classes,
                Some((&mut ws.deltas[last][..rows * classes], 1.0 / rows as f64)),
            );
            out.backward(&mut ws, rows, &mut grad);

            step += 1;
            let bc1 = 1.0 - libm::pow(cfg.beta1, step as f64);
            let bc2 = 1.0 - libm::pow(cfg.beta2, step as f64);
            let step_size = cfg.learning_rate / bc1;
            for (((p, g), m), v) in out.params.iter_mut().zip(&grad).zip(&mut m).zip(&mut v) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= step_size * *m / (math::sqrt(*v / bc2) + cfg.epsilon);
            }
        }
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("train_local"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Mean cross-entropy.
    pub loss: f64,
    /// Argmax class per sample, ties to the lowest index.
    pub predictions: Vec<usize>,
}

impl EvalResult {
    pub fn accuracy(&self, labels: &[usize]) -> f64 {
        let hits = self.predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
        hits as f64 / labels.len().max(1) as f64
    }
}

pub fn evaluate(model: &Mlp, data: &Dataset) -> Result<EvalResult> {
    model.check_data(data)?;
    let n = data.len();
    let classes = model.num_classes();
    let last = model.shapes.len();
    let chunk = EVAL_CHUNK.min(n);
    let mut ws = Workspace::new(&model.arch, chunk);
    let mut total = 0.0;
    let mut predictions = Vec::with_capacity(n);
    let all: Vec<usize> = (0..n).collect();
    for idx in all.chunks(chunk) {
        let rows = idx.len();
        ws.load_rows(data, idx);
        model.forward(&mut ws, rows);
        let logits = &ws.acts[last][..rows * classes];
        total += softmax_xent(logits, idx.iter().map(|&i| data.label(i)), classes, None);
        predictions.extend(logits.chunks_exact(classes).map(argmax));
    }
    Ok(EvalResult {
        loss: total / n as f64,
        predictions,
    })
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn flatten(model: &Mlp) -> ParamVector {
    ParamVector(model.params.clone())
}

pub fn unflatten(v: &ParamVector, arch: &[usize]) -> Result<Mlp> {
    let mut model = Mlp::zeros(arch)?;
    if v.len() != model.num_params() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector length",
            expected: model.num_params(),
            actual: v.len(),
        });
    }
    model.params.copy_from_slice(&v.0);
    Ok(model)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_lengths(a: &ParamVector, b: &ParamVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "parameter vector length",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

/// `a.b / (|a| |b|)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_lengths(a, b)?;
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(&a.0, &b.0) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn euclidean_distance(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_lengths(a, b)?;
    Ok(math::sqrt(a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum()))
}
