//! Gradient-boosted regression trees for binary classification.
//!
//! Second-order boosting of the weighted logistic loss. Each round computes
//! per-example gradients `g = w (p - y)` and hessians `h = w p (1 - p)`,
//! grows one depth-limited tree greedily by the regularized gain
//!
//! ```text
//! gain = ½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) - G²/(H+λ)] - γ
//! ```
//!
//! and sets each leaf to `-G/(H+λ)`. Splits need positive gain and a hessian
//! mass of at least `min_child_weight` on both sides. Candidate thresholds are
//! midpoints between consecutive distinct feature values; equal gains keep the
//! lower (feature, threshold).

use rand::Rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub subsample: f64,
    pub colsample: f64,
}

impl GbdtParams {
    /// The discriminator configuration used in the reference experiments.
    pub fn paper() -> Self {
        GbdtParams {
            n_trees: 10,
            max_depth: 2,
            lr: 0.1,
            gamma: 5.0,
            lambda: 5.0,
            min_child_weight: 5.0,
            subsample: 1.0,
            colsample: 1.0,
        }
    }

    /// Paper shape with split constraints loosened enough for small folds.
    pub fn relaxed() -> Self {
        GbdtParams { gamma: 0.0, lambda: 1.0, min_child_weight: 0.0, ..Self::paper() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "relaxed" => Ok(Self::relaxed()),
            other => Err(Error::config(format!("unknown GBDT preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.n_trees >= 1
            && self.max_depth >= 1
            && self.lr > 0.0
            && self.gamma >= 0.0
            && self.lambda >= 0.0
            && self.min_child_weight >= 0.0
            && self.subsample > 0.0
            && self.subsample <= 1.0
            && self.colsample > 0.0
            && self.colsample <= 1.0;
        if ok { Ok(()) } else { Err(Error::config(format!("invalid GBDT parameters {self:?}"))) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { weight: f64 },
    /// `x[feature] < threshold` goes left.
    Split { feature: usize, threshold: f64, gain: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight } => return weight,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub trees: Vec<Tree>,
    pub base_score: f64,
    pub lr: f64,
    pub dim: usize,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl GbdtModel {
    /// Raw logit using only the first `rounds` trees.
    pub fn staged_logit(&self, x: &[f64], rounds: usize) -> f64 {
        self.base_score + self.trees.iter().take(rounds).map(|t| self.lr * t.eval(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension { id: "<gbdt input>".into(), expected: self.dim, found: x.len() });
        }
        Ok(sigmoid(self.staged_logit(x, self.trees.len())))
    }
}

/// Weights that give both classes equal total mass: `N / (2 N_class)`.
pub fn balanced_weights(labels: &[bool]) -> Vec<f64> {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = n - pos;
    labels.iter().map(|&l| n / (2.0 * if l { pos } else { neg })).collect()
}

/// Weighted logistic loss of logits against labels.
pub fn logistic_loss(logits: &[f64], labels: &[bool], weights: &[f64]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((&z, &y), &w)| {
            // ln(1 + e^z) - y z, computed stably
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            w * (softplus - if y { z } else { 0.0 })
        })
        .sum()
}

pub fn fit_gbdt(features: &[Vec<f64>], labels: &[bool], weights: &[f64], params: &GbdtParams, seed: u64) -> Result<GbdtModel> {
    params.validate()?;
    if features.len() != labels.len() || labels.len() != weights.len() {
        return Err(Error::config("features, labels and weights differ in length"));
    }
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(Error::SingleClass);
    }
    if let Some(&w) = weights.iter().find(|&&w| w.is_nan() || w <= 0.0) {
        return Err(Error::NonPositiveWeight(w));
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::Dimension { id: "<gbdt feature>".into(), expected: dim, found: bad.len() });
    }

    let n = features.len();
    let mut rng = seeds::rng(seed);
    let mut logits = vec![0.0; n];
    let mut model = GbdtModel { trees: Vec::with_capacity(params.n_trees), base_score: 0.0, lr: params.lr, dim };
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..dim).collect();

    for _ in 0..params.n_trees {
        for i in 0..n {
            let p = sigmoid(logits[i]);
            grad[i] = weights[i] * (p - f64::from(u8::from(labels[i])));
            hess[i] = weights[i] * p * (1.0 - p);
        }
        let rows = if params.subsample < 1.0 {
            all_rows.iter().copied().filter(|_| rng.random::<f64>() < params.subsample).collect()
        } else {
            all_rows.clone()
        };
        let cols = if params.colsample < 1.0 {
            let k = ((params.colsample * dim as f64).round() as usize).clamp(1, dim);
            let mut c = all_cols.clone();
            c.shuffle(&mut rng);
            c.truncate(k);
            c.sort_unstable();
            c
        } else {
            all_cols.clone()
        };
        let mut builder = TreeBuilder { features, grad: &grad, hess: &hess, params, cols: &cols, nodes: Vec::new() };
        builder.grow(rows, 0);
        let tree = Tree { nodes: builder.nodes };
        for (z, x) in logits.iter_mut().zip(features) {
            *z += params.lr * tree.eval(x);
        }
        model.trees.push(tree);
    }
    Ok(model)
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    cols: &'a [usize],
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { weight: -g / (h + self.params.lambda) });
        if depth >= self.params.max_depth || rows.len() < 2 {
            return id;
        }
        let Some(best) = self.best_split(&rows, g, h) else { return id };
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.features[i][best.feature] < best.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, gain: best.gain, left: l, right: r };
        id
    }

    fn best_split(&self, rows: &[usize], g: f64, h: f64) -> Option<BestSplit> {
        let lambda = self.params.lambda;
        let parent = g * g / (h + lambda);
        let mut best: Option<BestSplit> = None;
        let mut sorted = rows.to_vec();
        for &f in self.cols {
            sorted.sort_by(|&a, &b| self.features[a][f].total_cmp(&self.features[b][f]));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..sorted.len() - 1 {
                let i = sorted[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let (v, next) = (self.features[i][f], self.features[sorted[w + 1]][f]);
                if v == next {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < self.params.min_child_weight || hr < self.params.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent) - self.params.gamma;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit { feature: f, threshold: 0.5 * (v + next), gain });
                }
            }
        }
        best
    }
}

/// Per-example weighting for cross-validated prediction.
#[derive(Debug, Clone, Copy)]
pub enum SampleWeights<'a> {
    /// Recompute [`balanced_weights`] on each training split.
    Balanced,
    Fixed(&'a [f64]),
}

/// Assigns each example to one of `folds` folds with sizes differing by at
/// most one. Falls back to a stratified assignment when a plain shuffle
/// leaves some training split without one of the classes.
pub fn assign_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::config("cross validation needs at least 2 folds"));
    }
    let n = labels.len();
    if n < folds {
        return Err(Error::config(format!("{n} examples cannot fill {folds} folds")));
    }
    // with stratification two members of a class already land in different
    // folds, so every training split sees both classes
    let pos = labels.iter().filter(|&&l| l).count();
    for (class, count) in [(1u8, pos), (0u8, n - pos)] {
        if count < 2 {
            return Err(Error::FoldsImpossible { folds, class, count });
        }
    }
    let mut rng = seeds::rng(seeds::derive(seed, &["folds"]));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut assignment = vec![0; n];
    for (slot, &i) in order.iter().enumerate() {
        assignment[i] = slot % folds;
    }
    let training_split_ok = |a: &[usize]| {
        (0..folds).all(|k| {
            let mut seen = (false, false);
            for (i, &f) in a.iter().enumerate() {
                if f != k {
                    if labels[i] { seen.0 = true } else { seen.1 = true }
                }
            }
            seen.0 && seen.1
        })
    };
    if training_split_ok(&assignment) {
        return Ok(assignment);
    }
    // stratified: deal each class round-robin, continuing the fold counter
    let mut slot = 0;
    for class in [true, false] {
        for &i in order.iter().filter(|&&i| labels[i] == class) {
            assignment[i] = slot % folds;
            slot += 1;
        }
    }
    Ok(assignment)
}

/// Out-of-fold probabilities: every example is predicted exactly once, by a
/// model that never saw it.
pub fn cv_predict(
    features: &[Vec<f64>],
    labels: &[bool],
    weights: SampleWeights<'_>,
    params: &GbdtParams,
    folds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if features.len() != labels.len() {
        return Err(Error::config("features and labels differ in length"));
    }
    if let SampleWeights::Fixed(w) = weights {
        if w.len() != labels.len() {
            return Err(Error::config("weights and labels differ in length"));
        }
    }
    let assignment = assign_folds(labels, folds, seed)?;
    let fits: Vec<Result<Vec<(usize, f64)>>> = {
        use rayon::prelude::*;
        (0..folds)
            .into_par_iter()
            .map(|k| {
                let train_idx: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != k).collect();
                let x: Vec<Vec<f64>> = train_idx.iter().map(|&i| features[i].clone()).collect();
                let y: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
                let w = match weights {
                    SampleWeights::Balanced => balanced_weights(&y),
                    SampleWeights::Fixed(all) => train_idx.iter().map(|&i| all[i]).collect(),
                };
                let model = fit_gbdt(&x, &y, &w, params, seeds::derive_index(seed, "fold", k))?;
                (0..labels.len())
                    .filter(|&i| assignment[i] == k)
                    .map(|i| Ok((i, model.predict(&features[i])?)))
                    .collect()
            })
            .collect()
    };
    let mut out = vec![f64::NAN; labels.len()];
    for fold in fits {
        for (i, p) in fold? {
            out[i] = p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn four_points() -> (Vec<Vec<f64>>, Vec<bool>, Vec<f64>) {
        (vec![vec![0.0], vec![0.2], vec![0.8], vec![1.0]], vec![true, true, false, false], vec![1.0; 4])
    }

    fn hand_params() -> GbdtParams {
        GbdtParams { n_trees: 1, max_depth: 1, lr: 1.0, gamma: 0.0, lambda: 1.0, min_child_weight: 0.0, subsample: 1.0, colsample: 1.0 }
    }

    #[test]
    fn hand_computed_stump() {
        let (x, y, w) = four_points();
        let m = fit_gbdt(&x, &y, &w, &hand_params(), 0).unwrap();
        let Node::Split { feature, threshold, gain, left, right } = m.trees[0].nodes[0] else { panic!("no split") };
        assert_eq!((feature, threshold), (0, 0.5));
        assert!((gain - 2.0 / 3.0).abs() < 1e-9);
        let Node::Leaf { weight: lw } = m.trees[0].nodes[left] else { panic!() };
        let Node::Leaf { weight: rw } = m.trees[0].nodes[right] else { panic!() };
        assert!((lw - 2.0 / 3.0).abs() < 1e-9);
        assert!((rw + 2.0 / 3.0).abs() < 1e-9);
        assert!((m.predict(&[0.1]).unwrap() - sigmoid(2.0 / 3.0)).abs() < 1e-12);
        assert!((m.predict(&[0.1]).unwrap() - 0.6608).abs() < 1e-4);
    }

    #[test]
    fn gamma_suppresses_split() {
        let (x, y, w) = four_points();
        let m = fit_gbdt(&x, &y, &w, &GbdtParams { gamma: 5.0, ..hand_params() }, 0).unwrap();
        assert!(matches!(m.trees[0].nodes[..], [Node::Leaf { .. }]));
        // the lone leaf of a balanced node has G = 0
        for p in [0.0, 0.3, 0.9] {
            assert_eq!(m.predict(&[p]).unwrap(), 0.5);
        }
    }

    #[test]
    fn errors() {
        let (x, _, w) = four_points();
        assert!(matches!(fit_gbdt(&x, &[true; 4], &w, &hand_params(), 0), Err(Error::SingleClass)));
        let (x, y, _) = four_points();
        assert!(matches!(fit_gbdt(&x, &y, &[1.0, 0.0, 1.0, 1.0], &hand_params(), 0), Err(Error::NonPositiveWeight(_))));
        let m = fit_gbdt(&x, &y, &[1.0; 4], &hand_params(), 0).unwrap();
        assert!(m.predict(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_tree_model_is_half() {
        let m = GbdtModel { trees: vec![], base_score: 0.0, lr: 0.1, dim: 3 };
        assert_eq!(m.predict(&[1.0, 2.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn depth_is_respected() {
        let mut rng = seeds::rng(3);
        let x: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<bool> = x.iter().map(|v| v[0] + v[1] * v[2] > 0.6).collect();
        let params = GbdtParams { max_depth: 3, n_trees: 5, ..GbdtParams::relaxed() };
        let m = fit_gbdt(&x, &y, &balanced_weights(&y), &params, 1).unwrap();
        assert!(m.trees.iter().all(|t| t.depth() <= 3));
        assert!(m.trees.iter().any(|t| t.depth() == 3));
    }

    #[test]
    fn subsampling_is_seeded() {
        let mut rng = seeds::rng(4);
        let x: Vec<Vec<f64>> = (0..40).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<bool> = x.iter().map(|v| v[1] > 0.5).collect();
        let w = balanced_weights(&y);
        let params = GbdtParams { subsample: 0.7, colsample: 0.5, ..GbdtParams::relaxed() };
        assert_eq!(fit_gbdt(&x, &y, &w, &params, 9).unwrap(), fit_gbdt(&x, &y, &w, &params, 9).unwrap());
    }

    #[test]
    fn folds_partition_examples() {
        let labels: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let a = assign_folds(&labels, 5, 1).unwrap();
        for k in 0..5 {
            assert_eq!(a.iter().filter(|&&f| f == k).count(), 2);
        }
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let p = cv_predict(&x, &labels, SampleWeights::Balanced, &GbdtParams::relaxed(), 5, 1).unwrap();
        assert_eq!(p.len(), 10);
        assert!(p.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn folds_need_enough_per_class() {
        let labels = [true, false, false, false, false, false];
        assert!(matches!(assign_folds(&labels, 5, 0), Err(Error::FoldsImpossible { class: 1, count: 1, .. })));
        let two = [true, true, false, false, false, false];
        let a = assign_folds(&two, 5, 0).unwrap();
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn stratified_fallback_keeps_both_classes() {
        // 5 positives among 50: plain shuffles regularly put 2 positives in one fold
        let labels: Vec<bool> = (0..50).map(|i| i < 5).collect();
        for seed in 0..20 {
            let a = assign_folds(&labels, 5, seed).unwrap();
            for k in 0..5 {
                assert!(labels.iter().zip(&a).any(|(&l, &f)| l && f != k));
            }
        }
    }

    proptest! {
        #[test]
        fn balanced_mass_is_equal(labels in prop::collection::vec(any::<bool>(), 2..200)) {
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let w = balanced_weights(&labels);
            let pos: f64 = w.iter().zip(&labels).filter(|(_, &l)| l).map(|(w, _)| w).sum();
            let neg: f64 = w.iter().zip(&labels).filter(|(_, &l)| !l).map(|(w, _)| w).sum();
            prop_assert!((pos - neg).abs() < 1e-9);
        }

    }
}
