// Budget allocation from per-domain child-model accuracy. Each child learns
// the acquisition model's soft labels on one source domain, so the score
// reflects how well that domain transfers, not its own label quality.

use std::collections::BTreeMap;

use mdal::acquisition::{self, AcquisitionConfig, AcquisitionSpec, RcaDenominator};
use mdal::data::{make_pool_split, SplitMode, SplitSizes};
use mdal::error::Result;
use mdal::synthetic::{gen_synthetic, DomainConfig, SyntheticConfig};

pub fn run() -> Result<()> {
    // hand-picked accuracies: target 0.8, sources 0.6 / 0.7 / 0.4
    let scores: BTreeMap<String, f64> = [("A", 0.6), ("B", 0.7), ("C", 0.4)].iter().map(|(d, s)| (d.to_string(), *s)).collect();
    for (smoothed, label) in [(false, "argmax"), (true, "smoothed")] {
        let (alloc, tau) = acquisition::allocate_from_scores(&scores, 0.8, 110, smoothed, RcaDenominator::Tau)?;
        println!("{label:<9} {:?} tau {:?}", alloc.per_domain, tau);
    }

    let pool = gen_synthetic(&SyntheticConfig {
        domains: vec![
            DomainConfig { name: "t".into(), shift: 0.0, flip: 0.0, size: 400 },
            DomainConfig { name: "near".into(), shift: 0.2, flip: 0.0, size: 200 },
            DomainConfig { name: "mid".into(), shift: 3.0, flip: 0.0, size: 200 },
            DomainConfig { name: "far".into(), shift: 8.0, flip: 0.0, size: 200 },
        ],
        classes: 3,
        dim: 8,
        separation: 1.5,
        anchor_norm: 1.0,
        seed: 4,
    })?;
    let split = make_pool_split(&pool, "t", SplitSizes { train: 40, dev: 100, test: 200 }, 9, SplitMode::Plain)?;
    let spec: AcquisitionSpec = "rca-smoothed".parse()?;
    let acquired = acquisition::acquire(&split, &spec, pool.classes(), &AcquisitionConfig::default(), 150, 1)?;
    let rca = acquired.rca.expect("budget method reports its allocation");
    println!("target dev accuracy {:.3}", rca.target_score);
    for (d, s) in &rca.domain_scores {
        println!("  {d:<5} child accuracy {s:.3}  tau {:.2}  share {}", rca.tau[d], rca.allocation.count(d));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
