// Exhaustive search over source-domain compositions, and the
// domain-versus-example ablation for a ranking method.

use mdal::data::SplitSizes;
use mdal::error::Result;
use mdal::harness::{self, HarnessConfig, SearchSettings};
use mdal::synthetic::{gen_synthetic, DomainConfig, SyntheticConfig};

pub fn run() -> Result<()> {
    let pool = gen_synthetic(&SyntheticConfig {
        domains: vec![
            DomainConfig { name: "t".into(), shift: 0.0, flip: 0.0, size: 500 },
            DomainConfig { name: "twin".into(), shift: 0.0, flip: 0.0, size: 200 },
            DomainConfig { name: "shifted".into(), shift: 2.0, flip: 0.0, size: 200 },
            DomainConfig { name: "flipped".into(), shift: 0.0, flip: 0.5, size: 200 },
        ],
        classes: 2,
        dim: 6,
        separation: 2.0,
        anchor_norm: 1.0,
        seed: 8,
    })?;
    let cfg = HarnessConfig { sizes: SplitSizes { train: 20, dev: 100, test: 300 }, ..HarnessConfig::default() };

    let settings = SearchSettings { in_domain: 20, increment: 20, total: 100, cap: 1000 };
    let search = harness::optimal_domain_search(&pool, "t", &settings, &cfg, 4)?;
    println!("{} compositions over {:?}, mean score {:.3}", search.compositions.len(), search.domains, search.mean_score);
    for c in search.compositions.iter().take(5) {
        println!("  {:?} -> {:.3}", c.units, c.score);
    }
    let worst = search.compositions.last().expect("at least one composition");
    println!("  worst: {:?} -> {:.3}", worst.units, worst.score);

    let ablation = harness::domain_vs_example_ablation(&pool, &"conf-up".parse()?, "t", 60, &cfg, &[1, 2, 3])?;
    println!("ablation with the conf-up histogram {:?}:", ablation.runs[0].histogram);
    for (name, s) in [("top", ablation.top_score), ("random", ablation.random_within_score), ("bottom", ablation.bottom_score)] {
        println!("  {name:<7} {:.3} +- {:.3}", s.mean, s.stderr);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
