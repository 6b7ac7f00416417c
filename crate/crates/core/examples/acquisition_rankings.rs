// Rank a multi-domain source pool with every classification method and show
// which domains each one would draw a 60-example budget from.

use mdal::acquisition::{self, AcquisitionConfig, AcquisitionSpec, Choice};
use mdal::data::{make_pool_split, SplitSizes};
use mdal::error::Result;
use mdal::harness;
use mdal::synthetic::{gen_synthetic, DomainConfig, SyntheticConfig};

pub fn run() -> Result<()> {
    let pool = gen_synthetic(&SyntheticConfig {
        domains: vec![
            DomainConfig { name: "t".into(), shift: 0.0, flip: 0.0, size: 400 },
            DomainConfig { name: "near".into(), shift: 0.3, flip: 0.0, size: 150 },
            DomainConfig { name: "far".into(), shift: 5.0, flip: 0.0, size: 150 },
            DomainConfig { name: "noisy".into(), shift: 2.0, flip: 0.5, size: 150 },
        ],
        classes: 3,
        dim: 8,
        separation: 2.0,
        anchor_norm: 3.0,
        seed: 3,
    })?;
    let sizes = SplitSizes { train: 60, dev: 100, test: 200 };
    let cfg = AcquisitionConfig::default();
    let n = 60;

    for spec in AcquisitionSpec::classification_suite() {
        let split = make_pool_split(&pool, "t", sizes, 11, spec.split_mode())?;
        let acquired = match acquisition::acquire(&split, &spec, pool.classes(), &cfg, n, 5) {
            Ok(a) => a,
            Err(e) => {
                println!("{:<14} skipped: {e}", spec.key());
                continue;
            }
        };
        let chosen = acquisition::select(&acquired.choice, &split, n, 5)?;
        let hist = harness::histogram(&split, &chosen);
        let kind = match acquired.choice {
            Choice::Ranking(_) => "single pool",
            Choice::Allocation(_) => "budget",
        };
        println!("{:<14} {:<11} {:?}", spec.key(), kind, hist);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
