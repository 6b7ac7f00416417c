//! Softmax-linear task model with input dropout.
//!
//! This is the trainable classifier behind both the acquisition model and the
//! final evaluated model. It maps an example's agnostic embedding to class
//! logits with one affine layer. Training minimizes mean cross-entropy (hard
//! or soft targets) with mini-batch Adam, applies inverted dropout to the
//! input features, and keeps the parameters from the epoch with the best
//! dev accuracy.
//!
//! Its task-specific representation of an input is the logit vector.

use std::path::Path;

use rand::Rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::error::{Error, Result};
use crate::seeds;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Mean epoch loss above which the true-class probability underflows f64.
const DIVERGENCE_LOSS: f64 = 700.0;

pub const DEFAULT_DROPOUT: f64 = 0.1;

/// Numerically stable `ln Σ exp(l)`.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| (l - lse).exp()).collect()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn shannon_entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Micro-batches folded into each parameter update.
    pub accumulation: usize,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { lr: 1e-2, epochs: 50, batch_size: 20, accumulation: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub classes: usize,
    pub dropout_rate: f64,
}

impl ModelSpec {
    pub fn new(classes: usize) -> Self {
        ModelSpec { classes, dropout_rate: DEFAULT_DROPOUT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub hyper: Hyper,
    pub best_epoch: usize,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmaxModel {
    pub classes: usize,
    pub dim: usize,
    pub dropout_rate: f64,
    /// Row-major `classes x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    #[serde(default)]
    pub record: Option<TrainRecord>,
}

/// Training target for one example.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Hard(usize),
    /// A probability distribution over classes.
    Soft(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub id: &'a str,
    pub x: &'a [f64],
    pub target: Target,
}

/// Gradient of the per-example loss, laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearSoftmaxModel {
    pub fn zeros(classes: usize, dim: usize, dropout_rate: f64) -> Self {
        LinearSoftmaxModel {
            classes,
            dim,
            dropout_rate,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
            record: None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension { id: "<input>".into(), expected: self.dim, found: x.len() });
        }
        Ok(())
    }

    fn logits_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes)
            .map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                self.bias[k] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
            })
            .collect()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.logits_unchecked(x))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Task-specific embedding of `x`.
    pub fn representation(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.logits(x)
    }

    /// Cross-entropy of one example and its gradient at the current
    /// parameters, without dropout.
    pub fn loss_and_gradient(&self, x: &[f64], target: &Target) -> Result<(f64, Gradient)> {
        self.check_dim(x)?;
        let mut grad = Gradient { weights: vec![0.0; self.weights.len()], bias: vec![0.0; self.classes] };
        let loss = self.accumulate(x, target, 1.0, &mut grad);
        Ok((loss, grad))
    }

    /// Adds `scale * dL/dθ` into `grad` and returns the loss.
    fn accumulate(&self, x: &[f64], target: &Target, scale: f64, grad: &mut Gradient) -> f64 {
        let logits = self.logits_unchecked(x);
        let lse = log_sum_exp(&logits);
        let mut loss = 0.0;
        for k in 0..self.classes {
            let p = (logits[k] - lse).exp();
            let t = match target {
                Target::Hard(y) => f64::from(u8::from(*y == k)),
                Target::Soft(dist) => dist[k],
            };
            if t > 0.0 {
                loss -= t * (logits[k] - lse);
            }
            let d = scale * (p - t);
            grad.bias[k] += d;
            let row = &mut grad.weights[k * self.dim..(k + 1) * self.dim];
            row.iter_mut().zip(x).for_each(|(g, xi)| *g += d * xi);
        }
        loss
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: LinearSoftmaxModel = serde_json::from_str(&text)?;
        if m.weights.len() != m.classes * m.dim || m.bias.len() != m.classes {
            return Err(Error::config("checkpoint parameter shapes do not match its dims"));
        }
        Ok(m)
    }
}

fn dropout_mask(rng: &mut impl Rng, x: &[f64], rate: f64, out: &mut Vec<f64>) {
    out.clear();
    if rate <= 0.0 {
        out.extend_from_slice(x);
        return;
    }
    let scale = 1.0 / (1.0 - rate);
    out.extend(x.iter().map(|xi| if rng.random::<f64>() < rate { 0.0 } else { xi * scale }));
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, lr: f64, params: &mut [f64], grads: impl Iterator<Item = f64>, offset: usize) {
        let b1t = 1.0 - ADAM_BETA1.powi(self.t);
        let b2t = 1.0 - ADAM_BETA2.powi(self.t);
        for ((p, g), i) in params.iter_mut().zip(grads).zip(offset..) {
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

pub fn hard_samples(examples: &[Example]) -> Result<Vec<Sample<'_>>> {
    examples
        .iter()
        .map(|e| Ok(Sample { id: &e.id, x: e.embedding()?, target: Target::Hard(e.gold()?) }))
        .collect()
}

/// Trains on labeled examples, validating on `dev`.
pub fn train(examples: &[Example], dev: &[Example], spec: &ModelSpec, hyper: &Hyper) -> Result<LinearSoftmaxModel> {
    train_samples(hard_samples(examples)?, dev, spec, hyper)
}

/// Trains on arbitrary (possibly soft) targets, validating on `dev`.
///
/// Samples are put in id order before training, so the result does not
/// depend on the order they are passed in.
pub fn train_samples(mut samples: Vec<Sample<'_>>, dev: &[Example], spec: &ModelSpec, hyper: &Hyper) -> Result<LinearSoftmaxModel> {
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if hyper.batch_size == 0 || hyper.accumulation == 0 || hyper.epochs == 0 {
        return Err(Error::config("batch size, accumulation and epochs must be positive"));
    }
    if !(0.0..1.0).contains(&spec.dropout_rate) {
        return Err(Error::config(format!("dropout rate {} outside [0, 1)", spec.dropout_rate)));
    }
    samples.sort_by(|a, b| a.id.cmp(b.id));
    let dim = samples[0].x.len();
    for s in &samples {
        if s.x.len() != dim {
            return Err(Error::Dimension { id: s.id.to_string(), expected: dim, found: s.x.len() });
        }
        match &s.target {
            Target::Hard(y) if *y >= spec.classes => {
                return Err(Error::LabelOutOfRange { id: s.id.to_string(), label: *y, classes: spec.classes })
            }
            Target::Soft(d) if d.len() != spec.classes => {
                return Err(Error::Dimension { id: s.id.to_string(), expected: spec.classes, found: d.len() })
            }
            _ => {}
        }
    }
    let dev_inputs: Vec<(&[f64], usize)> = dev.iter().map(|e| Ok((e.embedding()?, e.gold()?))).collect::<Result<_>>()?;

    let mut model = LinearSoftmaxModel::zeros(spec.classes, dim, spec.dropout_rate);
    let mut rng = seeds::rng(hyper.seed);
    let mut adam = Adam::new(model.weights.len() + model.bias.len());
    let mut grad = Gradient { weights: vec![0.0; model.weights.len()], bias: vec![0.0; spec.classes] };
    let mut masked = Vec::with_capacity(dim);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut best: Option<(f64, usize, LinearSoftmaxModel)> = None;

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut pending = 0;
        let mut pending_count = 0usize;
        for batch in order.chunks(hyper.batch_size) {
            for &i in batch {
                let s = &samples[i];
                dropout_mask(&mut rng, s.x, spec.dropout_rate, &mut masked);
                epoch_loss += model.accumulate(&masked, &s.target, 1.0, &mut grad);
            }
            pending += 1;
            pending_count += batch.len();
            if pending == hyper.accumulation {
                apply_update(&mut model, &mut adam, &mut grad, pending_count, hyper.lr);
                pending = 0;
                pending_count = 0;
            }
        }
        if pending > 0 {
            apply_update(&mut model, &mut adam, &mut grad, pending_count, hyper.lr);
        }
        let mean_loss = epoch_loss / samples.len() as f64;
        let finite = model.weights.iter().chain(&model.bias).all(|p| p.is_finite());
        if !mean_loss.is_finite() || mean_loss > DIVERGENCE_LOSS || !finite {
            return Err(Error::Divergence { lr: hyper.lr });
        }
        if dev_inputs.is_empty() {
            best = Some((0.0, epoch, model.clone()));
            continue;
        }
        let correct = dev_inputs.iter().filter(|(x, y)| argmax(&model.logits_unchecked(x)) == *y).count();
        let acc = correct as f64 / dev_inputs.len() as f64;
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, epoch, model.clone()));
        }
    }
    let (acc, epoch, mut model) = best.expect("at least one epoch ran");
    model.record = Some(TrainRecord {
        hyper: *hyper,
        best_epoch: epoch,
        dev_accuracy: (!dev_inputs.is_empty()).then_some(acc),
    });
    Ok(model)
}

fn apply_update(model: &mut LinearSoftmaxModel, adam: &mut Adam, grad: &mut Gradient, count: usize, lr: f64) {
    let inv = 1.0 / count as f64;
    adam.t += 1;
    let nw = model.weights.len();
    adam.step(lr, &mut model.weights, grad.weights.iter().map(|g| g * inv), 0);
    adam.step(lr, &mut model.bias, grad.bias.iter().map(|g| g * inv), nw);
    grad.weights.iter_mut().for_each(|g| *g = 0.0);
    grad.bias.iter_mut().for_each(|g| *g = 0.0);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inference {
    Deterministic,
    /// `passes` forward passes, each with its own dropout mask.
    MonteCarlo { passes: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionProfile {
    pub probs: Vec<f64>,
    pub logits: Vec<f64>,
    /// Predicted class per stochastic pass; empty in deterministic mode.
    pub passes: Vec<usize>,
    pub pass_entropies: Vec<f64>,
}

impl PredictionProfile {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        PredictionProfile { probs: softmax(&logits), logits, passes: Vec::new(), pass_entropies: Vec::new() }
    }
}

/// The Monte-Carlo stream of an example depends only on `(seed, id)`.
pub fn predict_profile(model: &LinearSoftmaxModel, example: &Example, mode: Inference) -> Result<PredictionProfile> {
    let x = example.embedding()?;
    let mut profile = PredictionProfile::from_logits(model.logits(x)?);
    if let Inference::MonteCarlo { passes, seed } = mode {
        let mut rng = seeds::rng(seeds::derive(seed, &["mc", &example.id]));
        let mut masked = Vec::with_capacity(x.len());
        for _ in 0..passes {
            dropout_mask(&mut rng, x, model.dropout_rate, &mut masked);
            let probs = softmax(&model.logits_unchecked(&masked));
            profile.passes.push(argmax(&probs));
            profile.pass_entropies.push(shannon_entropy(&probs));
        }
    }
    Ok(profile)
}

pub fn evaluate_accuracy(model: &LinearSoftmaxModel, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut correct = 0usize;
    for e in examples {
        if model.predict(e.embedding()?)? == e.gold()? {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lrs: Vec<f64>,
    pub epochs: Vec<usize>,
    pub accumulations: Vec<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_batch() -> usize {
    20
}

impl Default for Grid {
    fn default() -> Self {
        Grid { lrs: vec![1e-3, 1e-2], epochs: vec![20, 50], accumulations: vec![1], batch_size: default_batch() }
    }
}

impl Grid {
    /// Cells in lr-major, then epochs, then accumulation order. Cell `i`
    /// trains with seed `derive_index(seed, "grid", i)`.
    pub fn cells(&self, seed: u64) -> Vec<Hyper> {
        let mut out = Vec::new();
        for &lr in &self.lrs {
            for &epochs in &self.epochs {
                for &accumulation in &self.accumulations {
                    let seed = seeds::derive_index(seed, "grid", out.len());
                    out.push(Hyper { lr, epochs, batch_size: self.batch_size, accumulation, seed });
                }
            }
        }
        out
    }
}

/// Trains every grid cell and keeps the best dev accuracy (first cell wins
/// ties). Cells that error are skipped unless all of them do.
pub fn grid_search(train_set: &[Example], dev: &[Example], spec: &ModelSpec, grid: &Grid, seed: u64) -> Result<(LinearSoftmaxModel, Hyper)> {
    let cells = grid.cells(seed);
    if cells.is_empty() {
        return Err(Error::config("empty grid"));
    }
    let samples = hard_samples(train_set)?;
    let results: Vec<Result<(f64, LinearSoftmaxModel)>> = cells
        .par_iter()
        .map(|h| {
            let m = train_samples(samples.clone(), dev, spec, h)?;
            let acc = if dev.is_empty() { 0.0 } else { evaluate_accuracy(&m, dev)? };
            Ok((acc, m))
        })
        .collect();
    let mut best: Option<(f64, LinearSoftmaxModel, Hyper)> = None;
    let mut last_err = None;
    for (res, h) in results.into_iter().zip(cells) {
        match res {
            Ok((acc, m)) => {
                if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                    best = Some((acc, m, h));
                }
            }
            Err(e) => {
                log::debug!("grid cell lr={} epochs={} failed: {e}", h.lr, h.epochs);
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((_, m, h)) => Ok((m, h)),
        None => Err(Error::SearchFailed { last: Box::new(last_err.expect("non-empty grid")) }),
    }
}
