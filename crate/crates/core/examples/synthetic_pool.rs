// Generate a multi-domain pool, round-trip it through JSONL and measure
// how far each source domain sits from the target.

use mdal::data;
use mdal::error::Result;
use mdal::metrics;
use mdal::synthetic::{gen_synthetic, DomainConfig, SyntheticConfig};

pub fn run() -> Result<()> {
    let cfg = SyntheticConfig {
        domains: vec![
            DomainConfig { name: "target".into(), shift: 0.0, flip: 0.0, size: 300 },
            DomainConfig { name: "close".into(), shift: 0.5, flip: 0.0, size: 300 },
            DomainConfig { name: "far".into(), shift: 4.0, flip: 0.0, size: 300 },
            DomainConfig { name: "noisy".into(), shift: 1.0, flip: 0.4, size: 300 },
        ],
        classes: 3,
        dim: 8,
        separation: 3.0,
        anchor_norm: 1.0,
        seed: 7,
    };
    let pool = gen_synthetic(&cfg)?;

    let dir = std::env::temp_dir().join(format!("mdal-synthetic-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| mdal::error::Error::io(&dir, e))?;
    let path = dir.join("examples.jsonl");
    data::write_examples_jsonl(&path, pool.examples())?;
    data::write_embeddings_jsonl(&data::sidecar_paths(&path).0, pool.examples())?;
    let reloaded = data::load_examples(&path, cfg.classes)?;
    assert_eq!(reloaded.len(), pool.len());
    let _ = std::fs::remove_dir_all(&dir);

    println!("{} examples, {} classes", pool.len(), pool.classes());
    let distances = metrics::domain_distances(&pool, "target", 300, 128, 1)?;
    for (domain, d) in &distances {
        println!("  sliced W1(target, {domain:>5}) = {d:.3}");
    }
    let s = metrics::aggregate_domain_distances(&distances)?;
    println!("  mean {:.3}  min {:.3}  max {:.3}", s.mean, s.min, s.max);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
