mod common;

use common::*;
use mdal::gbdt::{self, GbdtParams, Node};
use mdal::metrics;
use mdal::seeds;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn assignment_solver_matches_permutation_search() {
    fn permute(k: usize, perm: &mut Vec<usize>, used: &mut [bool], cost: &[Vec<f64>], acc: f64, best: &mut f64) {
        if k == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                perm.push(j);
                permute(k + 1, perm, used, cost, acc + cost[k][j], best);
                perm.pop();
                used[j] = false;
            }
        }
    }
    let mut rng = seeds::rng(1);
    for n in 1..=6 {
        for _ in 0..20 {
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            let mut best = f64::INFINITY;
            permute(0, &mut Vec::new(), &mut vec![false; n], &cost, 0.0, &mut best);
            assert!((assignment_cost(&cost) - best).abs() < 1e-12);
        }
    }
}

#[test]
fn one_dimensional_w1_is_the_sorted_matching() {
    let mut rng = seeds::rng(2);
    for n in [1, 2, 5, 17, 40] {
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ys: Vec<f64> = (0..n).map(|_| 3.0 * rng.random::<f64>()).collect();
        let pts = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
        let exact = exact_w1(&pts(&xs), &pts(&ys), |a, b| (a[0] - b[0]).abs());
        assert!((metrics::wasserstein_1d(&xs, &ys).unwrap() - exact).abs() < 1e-9);
    }
    assert_eq!(exact_w1(&[vec![0.0], vec![0.0]], &[vec![0.0], vec![2.0]], |a, b| (a[0] - b[0]).abs()), 1.0);
}

#[test]
fn knight_tau_matches_pair_enumeration() {
    let mut rng = seeds::rng(3);
    for _ in 0..200 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..=20);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 * 0.5).collect();
        assert_eq!(metrics::kendall_tau(&x, &y).unwrap(), brute_tau(&x, &y));
    }
}

#[test]
fn task_model_gradient_matches_finite_differences() {
    for probe in 0..100 {
        let err = gradient_check(probe);
        assert!(err < 1e-4, "probe {probe}: relative error {err}");
    }
}

#[test]
fn fitted_leaves_are_newton_steps() {
    for seed in 0..30 {
        let (x, y) = random_dataset(seed);
        let w = gbdt::balanced_weights(&y);
        let params = GbdtParams { n_trees: 1, max_depth: 1, lr: 1.0, ..GbdtParams::relaxed() };
        let m = gbdt::fit_gbdt(&x, &y, &w, &params, seed).unwrap();
        let tree = &m.trees[0];
        // At the zero starting logit every gradient is w(0.5 - y) and every hessian w/4.
        let leaf_oracle = |rows: &[usize]| {
            let g: f64 = rows.iter().map(|&i| w[i] * (0.5 - f64::from(u8::from(y[i])))).sum();
            let h: f64 = rows.iter().map(|&i| w[i] * 0.25).sum();
            (-g / (h + params.lambda), g, h)
        };
        let all: Vec<usize> = (0..x.len()).collect();
        match &tree.nodes[0] {
            Node::Split { feature, threshold, gain, left, right } => {
                let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[i][*feature] < *threshold);
                let (wl, gl, hl) = leaf_oracle(&l);
                let (wr, gr, hr) = leaf_oracle(&r);
                let (_, g, h) = leaf_oracle(&all);
                let lam = params.lambda;
                let expect_gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - g * g / (h + lam));
                assert!((gain - expect_gain).abs() < 1e-9);
                for (node, expect) in [(*left, wl), (*right, wr)] {
                    match tree.nodes[node] {
                        Node::Leaf { weight } => assert!((weight - expect).abs() < 1e-9),
                        _ => panic!("depth-1 tree has a nested split"),
                    }
                }
            }
            Node::Leaf { weight } => assert!((weight - leaf_oracle(&all).0).abs() < 1e-9),
        }
    }
}

#[test]
fn training_loss_never_increases() {
    for seed in 0..50 {
        let (x, y) = random_dataset(100 + seed);
        let w = gbdt::balanced_weights(&y);
        let m = gbdt::fit_gbdt(&x, &y, &w, &GbdtParams { n_trees: 20, ..GbdtParams::relaxed() }, seed).unwrap();
        let mut prev = f64::INFINITY;
        for r in 0..=m.trees.len() {
            let logits: Vec<f64> = x.iter().map(|v| m.staged_logit(v, r)).collect();
            let loss = gbdt::logistic_loss(&logits, &y, &w);
            assert!(loss <= prev + 1e-12, "seed {seed} round {r}: {loss} > {prev}");
            prev = loss;
        }
    }
}
