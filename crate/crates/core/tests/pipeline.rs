mod common;

use std::collections::BTreeMap;

use mdal::acquisition::{self, AcquisitionSpec, DalEFallback, DalInputs, DalVariant, Method};
use mdal::data::{make_pool_split, Pool, SplitMode, SplitSizes};
use mdal::encoders::Space;
use mdal::error::Error;
use mdal::gbdt::GbdtParams;
use mdal::harness::{self, HarnessConfig, MatrixPlan, SearchSettings};
use mdal::metrics;
use mdal::model::{self, Hyper, ModelSpec};
use mdal::synthetic::{gen_synthetic, DomainConfig, SyntheticConfig};

fn domain(name: &str, shift: f64, flip: f64, size: usize) -> DomainConfig {
    DomainConfig { name: name.into(), shift, flip, size }
}

fn pool(domains: Vec<DomainConfig>, classes: usize, dim: usize, separation: f64, seed: u64) -> Pool {
    gen_synthetic(&SyntheticConfig { domains, classes, dim, separation, anchor_norm: 1.0, seed }).unwrap()
}

fn small_cfg() -> HarnessConfig {
    let mut cfg = HarnessConfig { sizes: SplitSizes { train: 40, dev: 60, test: 100 }, ..HarnessConfig::default() };
    cfg.acquisition.gbdt = GbdtParams::relaxed();
    cfg
}

#[test]
fn dal_t_prefers_the_matching_domain() {
    for seed in 0..5 {
        let p = pool(vec![domain("t", 0.0, 0.0, 100), domain("same", 0.0, 0.0, 60), domain("far", 4.0, 0.0, 60)], 2, 8, 2.0, seed);
        let split = make_pool_split(&p, "t", SplitSizes { train: 40, dev: 10, test: 10 }, seed, SplitMode::Discriminator).unwrap();
        let r = acquisition::rank_dal(&DalInputs {
            split: &split,
            variant: DalVariant::Target,
            space: Space::Agnostic,
            acq_model: None,
            params: &GbdtParams::relaxed(),
            folds: 5,
            fallback: DalEFallback::Error,
            seed,
        })
        .unwrap();
        assert_eq!(r.len(), split.source.len());
        let mut ids: Vec<&str> = r.ids().collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), split.source.len());
        let same = r.entries().iter().take(60).filter(|e| e.domain == "same").count();
        assert!(same >= 42, "seed {seed}: {same}/60 from the matching domain");
    }
}

#[test]
fn dal_e_without_errors() {
    let p = pool(vec![domain("t", 0.0, 0.0, 120), domain("s", 1.0, 0.0, 40)], 2, 4, 20.0, 1);
    let split = make_pool_split(&p, "t", SplitSizes { train: 40, dev: 20, test: 20 }, 1, SplitMode::Discriminator).unwrap();
    let m = model::train(&split.train, &split.dev, &ModelSpec::new(2), &Hyper::default()).unwrap();
    assert_eq!(model::evaluate_accuracy(&m, &split.train_b).unwrap(), 1.0);
    let mut inputs = DalInputs {
        split: &split,
        variant: DalVariant::Error,
        space: Space::Specific,
        acq_model: Some(&m),
        params: &GbdtParams::relaxed(),
        folds: 5,
        fallback: DalEFallback::Error,
        seed: 0,
    };
    assert!(matches!(acquisition::rank_dal(&inputs), Err(Error::NoErrors)));
    inputs.fallback = DalEFallback::DalT;
    let fallback = acquisition::rank_dal(&inputs).unwrap();
    inputs.variant = DalVariant::Target;
    assert_eq!(fallback, acquisition::rank_dal(&inputs).unwrap());
}

#[test]
fn empty_budget_reproduces_the_baseline() {
    let p = pool(vec![domain("t", 0.0, 0.0, 220), domain("s", 1.0, 0.2, 100)], 3, 6, 2.0, 2);
    let cfg = small_cfg();
    for key in ["random", "entr-up", "dal-t", "rca-smoothed"] {
        let cell = harness::run_cell(&p, &key.parse().unwrap(), "t", 0, &cfg, 9).unwrap();
        assert_eq!(cell.score, cell.baseline_score, "{key}");
        assert!(cell.chosen.is_empty());
    }
}

#[test]
fn histograms_sum_to_budget_for_every_method() {
    let p = pool(vec![domain("t", 0.0, 0.1, 220), domain("a", 0.5, 0.2, 80), domain("b", 2.0, 0.0, 80)], 3, 6, 2.0, 3);
    let cfg = small_cfg();
    for spec in AcquisitionSpec::classification_suite() {
        let cell = harness::run_cell(&p, &spec, "t", 50, &cfg, 4).unwrap();
        assert_eq!(cell.histogram.values().sum::<usize>(), 50, "{spec}");
        assert_eq!(cell.chosen.len(), 50);
        assert!((0.0..=1.0).contains(&cell.score));
        assert_eq!(harness::replay_cell(&p, &cell, &cfg).unwrap(), cell.score, "{spec} replay");
    }
}

#[test]
fn random_extra_data_from_an_identical_domain_does_not_hurt() {
    let p = pool(vec![domain("t", 0.0, 0.0, 400), domain("twin", 0.0, 0.0, 400)], 3, 8, 2.0, 5);
    let cfg = small_cfg();
    let diffs: Vec<f64> = (0..5)
        .map(|seed| harness::run_cell(&p, &AcquisitionSpec::plain(Method::Random), "t", 80, &cfg, seed).unwrap().improvement())
        .collect();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    assert!(mean >= -0.03, "mean change {mean} ({diffs:?})");
}

#[test]
fn random_histogram_tracks_domain_proportions() {
    let p = pool(
        vec![domain("t", 0.0, 0.0, 100), domain("a", 0.0, 0.0, 600), domain("b", 0.0, 0.0, 1200), domain("c", 0.0, 0.0, 1800)],
        2,
        2,
        1.0,
        6,
    );
    let split = make_pool_split(&p, "t", SplitSizes { train: 10, dev: 10, test: 10 }, 0, SplitMode::Plain).unwrap();
    for seed in 0..5 {
        let r = acquisition::rank_random(&split.source, seed).unwrap();
        let h = harness::histogram(&split, &r.top(600));
        let chi2: f64 = [("a", 600.0), ("b", 1200.0), ("c", 1800.0)]
            .iter()
            .map(|(d, size)| {
                let expected = 600.0 * size / 3600.0;
                (h.get(*d).copied().unwrap_or(0) as f64 - expected).powi(2) / expected
            })
            .sum();
        // 99.9th percentile of chi-square with 2 degrees of freedom.
        assert!(chi2 < 13.82, "seed {seed}: chi2 {chi2} for {h:?}");
    }
}

#[test]
fn matrix_counts_isolation_and_determinism() {
    let p = pool(
        vec![domain("easy", 0.0, 0.0, 260), domain("noisy", 0.3, 0.5, 260), domain("src", 1.0, 0.0, 100)],
        2,
        4,
        20.0,
        7,
    );
    let cfg = small_cfg();
    let plan = MatrixPlan {
        specs: vec!["random".parse().unwrap(), "dal-e".parse().unwrap()],
        targets: vec!["easy".into(), "noisy".into()],
        budgets: vec![30],
        seeds: vec![11],
    };
    let a = harness::run_matrix(&p, &plan, &cfg, 2).unwrap();
    assert_eq!(a.cells.len() + a.errors.len(), 4);
    assert_eq!(a.errors.len(), 1, "{:?}", a.errors);
    assert_eq!((a.errors[0].method.as_str(), a.errors[0].target.as_str()), ("dal-e", "easy"));
    assert!(a.errors[0].message.contains("no errors"), "{}", a.errors[0].message);

    let b = harness::run_matrix(&p, &plan, &cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (fa, fb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    harness::write_scores_csv(&fa, &a.cells).unwrap();
    harness::write_scores_csv(&fb, &b.cells).unwrap();
    assert_eq!(std::fs::read(&fa).unwrap(), std::fs::read(&fb).unwrap());
    let text = std::fs::read_to_string(&fa).unwrap();
    assert!(text.starts_with("method,direction,space,variant,strategy,target,n,seed,score,baseline_score,improvement\n"));
}

#[test]
fn search_enumerates_stars_and_bars() {
    let p = pool(
        vec![domain("t", 0.0, 0.0, 200), domain("a", 0.2, 0.0, 40), domain("b", 1.0, 0.0, 40), domain("c", 2.0, 0.0, 40)],
        2,
        4,
        2.0,
        8,
    );
    let cfg = HarnessConfig { grid: model::Grid { lrs: vec![1e-2], epochs: vec![20], ..Default::default() }, ..small_cfg() };
    let settings = SearchSettings { in_domain: 20, increment: 5, total: 40, cap: 100 };
    let r = harness::optimal_domain_search(&p, "t", &settings, &cfg, 1).unwrap();
    assert_eq!(r.compositions.len(), 15);
    let mean = r.compositions.iter().map(|c| c.score).sum::<f64>() / 15.0;
    assert!((r.mean_score - mean).abs() < 1e-12);
    assert!(r.compositions.windows(2).all(|w| w[0].score >= w[1].score));

    let tight = SearchSettings { cap: 14, ..settings.clone() };
    match harness::optimal_domain_search(&p, "t", &tight, &cfg, 1) {
        Err(Error::EnumerationCap { count, cap }) => assert_eq!((count, cap), (15, 14)),
        other => panic!("{other:?}"),
    }
    let ragged = SearchSettings { total: 42, ..settings };
    assert!(harness::optimal_domain_search(&p, "t", &ragged, &cfg, 1).is_err());
}

#[test]
fn search_avoids_the_adversarial_domain() {
    let mut votes = 0;
    for seed in 0..5 {
        let p = pool(vec![domain("t", 0.0, 0.0, 600), domain("adv", 0.0, 0.5, 200), domain("twin", 0.0, 0.0, 200)], 4, 8, 2.0, seed);
        let cfg = HarnessConfig { sizes: SplitSizes { train: 20, dev: 100, test: 400 }, ..small_cfg() };
        let settings = SearchSettings { in_domain: 20, increment: 40, total: 180, cap: 100 };
        let r = harness::optimal_domain_search(&p, "t", &settings, &cfg, seed).unwrap();
        if r.compositions[0].units["adv"] == 0 {
            votes += 1;
        }
    }
    assert!(votes >= 3, "{votes}/5 seeds kept the adversarial domain out");
}

#[test]
fn ablation_selections_share_a_histogram() {
    let p = pool(vec![domain("t", 0.0, 0.0, 220), domain("a", 0.3, 0.0, 60), domain("b", 2.0, 0.3, 60)], 3, 6, 2.0, 9);
    let cfg = small_cfg();
    let spec: AcquisitionSpec = "knn".parse().unwrap();
    let r = harness::domain_vs_example_ablation(&p, &spec, "t", 40, &cfg, &[1, 2]).unwrap();
    for run in &r.runs {
        let split = make_pool_split(&p, "t", cfg.sizes, run.seed, SplitMode::Discriminator).unwrap();
        for sel in [&run.top, &run.random_within, &run.bottom] {
            assert_eq!(harness::histogram(&split, sel), run.histogram);
        }
    }
    let all = harness::domain_vs_example_ablation(&p, &spec, "t", 120, &cfg, &[1]).unwrap();
    let run = &all.runs[0];
    assert_eq!(run.top_score, run.random_within_score);
    assert_eq!(run.top_score, run.bottom_score);
    assert!(harness::domain_vs_example_ablation(&p, &"rca".parse().unwrap(), "t", 10, &cfg, &[1]).is_err());
}

#[test]
fn ablation_top_beats_bottom_on_the_contrived_pool() {
    // confidence ranking: its top examples sit near the decision boundaries
    let cfg = HarnessConfig { sizes: SplitSizes { train: 40, dev: 200, test: 2000 }, ..HarnessConfig::default() };
    let spec: AcquisitionSpec = "conf-up".parse().unwrap();
    let (mut top, mut bottom) = (0.0, 0.0);
    for seed in 0..10 {
        let p = gen_synthetic(&common::contrived_config(seed)).unwrap();
        let r = harness::domain_vs_example_ablation(&p, &spec, "t", 200, &cfg, &[seed]).unwrap();
        top += r.top_score.mean;
        bottom += r.bottom_score.mean;
    }
    assert!(top >= bottom, "top {} < bottom {}", top / 10.0, bottom / 10.0);
}

#[test]
fn identical_domains_are_close_in_sliced_w1() {
    for seed in 0..5 {
        let p = pool(vec![domain("x", 0.0, 0.0, 500), domain("y", 0.0, 0.0, 500)], 3, 8, 2.0, seed);
        let d = metrics::domain_distances(&p, "x", 500, 256, seed).unwrap();
        assert!(d["y"] < 0.1, "seed {seed}: {}", d["y"]);
    }
}

#[test]
fn half_flipped_binary_labels_carry_no_signal() {
    // A fit to pure label noise picks a random direction whose overlap with
    // the class axis swings clean accuracy far from 0.5 in either direction,
    // so the expectation is estimated over many independent pools.
    let mut accs = Vec::new();
    for seed in 0..40 {
        let p = pool(vec![domain("clean", 0.0, 0.0, 2000), domain("noisy", 0.0, 0.5, 400)], 2, 8, 3.0, 10 + seed);
        let noisy: Vec<_> = p.domain_examples("noisy").cloned().collect();
        let clean: Vec<_> = p.domain_examples("clean").cloned().collect();
        let m = model::train(&noisy, &[], &ModelSpec::new(2), &Hyper { seed, ..Hyper::default() }).unwrap();
        accs.push(model::evaluate_accuracy(&m, &clean).unwrap());
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.05, "{accs:?}");
}

#[test]
fn rca_domain_scores_are_child_accuracies() {
    let p = pool(vec![domain("t", 0.0, 0.0, 220), domain("good", 0.1, 0.0, 80), domain("bad", 0.1, 0.6, 80)], 3, 6, 3.0, 12);
    let cfg = small_cfg();
    let cell = harness::run_cell(&p, &"rca-smoothed".parse().unwrap(), "t", 60, &cfg, 0).unwrap();
    let rca = cell.rca.unwrap();
    let scores: BTreeMap<_, _> = rca.domain_scores.clone();
    assert!(scores.values().all(|s| (0.0..=1.0).contains(s)));
    assert_eq!(rca.allocation.per_domain.values().sum::<usize>(), 60);
}
