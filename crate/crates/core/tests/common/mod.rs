//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use mdal::model::{LinearSoftmaxModel, Target};
use mdal::seeds;
use mdal::synthetic::{DomainConfig, SyntheticConfig};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// O(n²) Kendall tau: every tied pair (in either coordinate) counts half
/// concordant, half discordant.
pub fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
    let (mut c, mut d) = (0.0, 0.0);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let dx = x[j] - x[i];
            let dy = y[j] - y[i];
            if dx == 0.0 || dy == 0.0 {
                c += 0.5;
                d += 0.5;
            } else if (dx > 0.0) == (dy > 0.0) {
                c += 1.0;
            } else {
                d += 1.0;
            }
        }
    }
    (c - d) / (c + d)
}

/// Minimum-cost perfect matching on a square cost matrix (shortest
/// augmenting path with potentials). Returns the total cost.
pub fn assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
}

/// Exact W1 between equal-size point sets under the given ground metric.
pub fn exact_w1<F: Fn(&[f64], &[f64]) -> f64>(xs: &[Vec<f64>], ys: &[Vec<f64>], dist: F) -> f64 {
    let cost: Vec<Vec<f64>> = xs.iter().map(|x| ys.iter().map(|y| dist(x, y)).collect()).collect();
    assignment_cost(&cost) / xs.len() as f64
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn naive_softmax(logits: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn naive_conf(probs: &[f64]) -> f64 {
    let mut m = probs[0];
    for &p in probs {
        if p > m {
            m = p;
        }
    }
    -m
}

pub fn naive_entropy(probs: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

pub fn naive_energy(logits: &[f64]) -> f64 {
    -logits.iter().map(|l| l.exp()).sum::<f64>().ln()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// One near domain, one label-flipped far domain, and a large target.
pub fn contrived_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        domains: vec![
            DomainConfig { name: "adv".into(), shift: 10.0, flip: 0.5, size: 200 },
            DomainConfig { name: "near".into(), shift: 0.2, flip: 0.0, size: 200 },
            DomainConfig { name: "t".into(), shift: 0.0, flip: 0.0, size: 3000 },
        ],
        classes: 4,
        dim: 16,
        separation: 1.5,
        anchor_norm: 6.0,
        seed,
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

/// Central-difference check of the task-model gradient; returns the worst
/// relative error over all parameters.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = seeds::rng(seed);
    let classes = rng.random_range(2..=6);
    let dim = rng.random_range(1..=8);
    let mut m = LinearSoftmaxModel::zeros(classes, dim, 0.0);
    m.weights.iter_mut().for_each(|w| *w = StandardNormal.sample(&mut rng));
    m.bias.iter_mut().for_each(|b| *b = StandardNormal.sample(&mut rng));
    let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let target = if rng.random::<bool>() {
        Target::Hard(rng.random_range(0..classes))
    } else {
        let raw: Vec<f64> = (0..classes).map(|_| rng.random::<f64>() + 0.01).collect();
        let s: f64 = raw.iter().sum();
        Target::Soft(raw.iter().map(|r| r / s).collect())
    };
    let (_, grad) = m.loss_and_gradient(&x, &target).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, numeric: f64| {
        let scale = analytic.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((analytic - numeric).abs() / scale);
    };
    for i in 0..m.weights.len() {
        let orig = m.weights[i];
        m.weights[i] = orig + h;
        let up = m.loss_and_gradient(&x, &target).unwrap().0;
        m.weights[i] = orig - h;
        let down = m.loss_and_gradient(&x, &target).unwrap().0;
        m.weights[i] = orig;
        check(grad.weights[i], (up - down) / (2.0 * h));
    }
    for k in 0..classes {
        let orig = m.bias[k];
        m.bias[k] = orig + h;
        let up = m.loss_and_gradient(&x, &target).unwrap().0;
        m.bias[k] = orig - h;
        let down = m.loss_and_gradient(&x, &target).unwrap().0;
        m.bias[k] = orig;
        check(grad.bias[k], (up - down) / (2.0 * h));
    }
    worst
}

/// Noisy threshold labels on the first coordinate; both classes present.
pub fn random_dataset(seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = seeds::rng(seed);
    let n = rng.random_range(10..80);
    let d = rng.random_range(1..5);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let mut y: Vec<bool> = x.iter().map(|v| v[0] + 0.7 * Distribution::<f64>::sample(&StandardNormal, &mut rng) > 0.0).collect();
    y[0] = true;
    y[1] = false;
    (x, y)
}
