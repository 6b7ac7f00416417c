// Out-of-fold gradient-boosted domain discriminator: how separable is each
// source domain from the target, and which examples does DAL-T pick?

use mdal::acquisition::{self, DalEFallback, DalInputs, DalVariant};
use mdal::data::{make_pool_split, SplitMode, SplitSizes};
use mdal::encoders::Space;
use mdal::error::Result;
use mdal::gbdt::{cv_predict, GbdtParams, SampleWeights};
use mdal::metrics;
use mdal::synthetic::{gen_synthetic, DomainConfig, SyntheticConfig};

pub fn run() -> Result<()> {
    let pool = gen_synthetic(&SyntheticConfig {
        domains: vec![
            DomainConfig { name: "t".into(), shift: 0.0, flip: 0.0, size: 300 },
            DomainConfig { name: "same".into(), shift: 0.0, flip: 0.0, size: 150 },
            DomainConfig { name: "shifted".into(), shift: 3.0, flip: 0.0, size: 150 },
        ],
        classes: 2,
        dim: 8,
        separation: 2.0,
        anchor_norm: 1.0,
        seed: 21,
    })?;

    let target: Vec<Vec<f64>> = pool.domain_examples("t").take(150).map(|e| e.embedding().map(<[f64]>::to_vec)).collect::<Result<_>>()?;
    for source in ["same", "shifted"] {
        let mut x = target.clone();
        let mut y = vec![true; x.len()];
        for e in pool.domain_examples(source) {
            x.push(e.embedding()?.to_vec());
            y.push(false);
        }
        let p = cv_predict(&x, &y, SampleWeights::Balanced, &GbdtParams::relaxed(), 5, 1)?;
        println!("target vs {source:<8} out-of-fold AUC {:.3}", metrics::auc(&p, &y)?);
    }

    let split = make_pool_split(&pool, "t", SplitSizes { train: 40, dev: 60, test: 100 }, 2, SplitMode::Discriminator)?;
    let ranking = acquisition::rank_dal(&DalInputs {
        split: &split,
        variant: DalVariant::Target,
        space: Space::Agnostic,
        acq_model: None,
        params: &GbdtParams::paper(),
        folds: 5,
        fallback: DalEFallback::Error,
        seed: 3,
    })?;
    println!("DAL-T top 10:");
    for e in ranking.entries().iter().take(10) {
        println!("  {:<16} {:<8} {:.3}", e.id, e.domain, e.score);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
