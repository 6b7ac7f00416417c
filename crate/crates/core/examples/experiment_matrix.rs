// A small method x target x budget x seed matrix: scores, improvement over
// the target-only baseline, and rank agreement between methods.

use std::collections::BTreeMap;

use mdal::acquisition::AcquisitionSpec;
use mdal::error::Result;
use mdal::harness::{self, HarnessConfig, MatrixPlan};
use mdal::metrics::{RankingRecord, TauMatrix};
use mdal::synthetic::{gen_synthetic, SyntheticConfig};

pub fn run() -> Result<()> {
    let mut sc = SyntheticConfig::uniform(3, 400, 3, 8, 13);
    sc.domains[1].shift = 0.5;
    sc.domains[2].shift = 3.0;
    sc.domains[2].flip = 0.3;
    let pool = gen_synthetic(&sc)?;

    let specs: Vec<AcquisitionSpec> = ["random", "conf-up", "entr-up", "bald-up", "dal-t", "knn"].iter().map(|k| k.parse()).collect::<Result<_>>()?;
    let plan = MatrixPlan { specs: specs.clone(), targets: vec!["d0".into(), "d1".into()], budgets: vec![80, 180], seeds: vec![1, 2] };
    let result = harness::run_matrix(&pool, &plan, &HarnessConfig::default(), 0)?;
    println!("{} cells, {} errors", result.cells.len(), result.errors.len());

    let mut mean: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for c in &result.cells {
        let e = mean.entry(c.method.key()).or_default();
        e.0 += c.improvement();
        e.1 += 1;
    }
    for (m, (sum, count)) in &mean {
        println!("  {m:<8} mean improvement {:+.2} points", 100.0 * sum / *count as f64);
    }

    let methods: Vec<String> = specs.iter().map(AcquisitionSpec::key).collect();
    let mut groups: BTreeMap<String, BTreeMap<String, RankingRecord>> = BTreeMap::new();
    for c in result.cells.iter().filter(|c| c.target == "d0") {
        if let Some(r) = &c.ranking {
            groups
                .entry(format!("n{}-s{}", c.n, c.seed))
                .or_default()
                .insert(c.method.key(), RankingRecord { entries: r.entries().to_vec(), direction: r.direction() });
        }
    }
    let tau = TauMatrix::from_rankings(&methods, &groups)?;
    let mut out = Vec::new();
    tau.write_csv(&mut out)?;
    println!("Kendall tau between rankings (target d0):\n{}", String::from_utf8_lossy(&out));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
