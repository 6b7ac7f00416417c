//! Experiment engine.
//!
//! A cell runs one acquisition method against one target domain and budget:
//!
//! 1. split the target domain and mask the source pool;
//! 2. train the acquisition model on the target training sample;
//! 3. rank (or allocate) the source pool and take `n` examples;
//! 4. label them through the split's annotator;
//! 5. grid-search a final model on target train plus the chosen examples and
//!    score it on target test.
//!
//! Seeds: the split and the final model depend only on `(target, seed)`, so
//! every method sees the same target data and the same final-training
//! randomness; the acquisition step is seeded by
//! `derive(seed, [method, target, n])`.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, AcquisitionConfig, AcquisitionSpec, Choice, RcaOutcome, Strategy};
use crate::data::{make_pool_split, Direction, Pool, PoolSplit, Ranking, SplitMode, SplitSizes};
use crate::error::{Error, Result};
use crate::model::{self, Grid, Hyper, ModelSpec};
use crate::seeds;

pub const PAPER_BUDGETS: [usize; 3] = [8000, 18000, 28000];
pub const DEFAULT_SCALE: f64 = 0.01;
pub const DEFAULT_REPLICATES: usize = 5;

/// Paper budgets multiplied by `scale` and rounded.
pub fn scaled_budgets(scale: f64) -> Vec<usize> {
    PAPER_BUDGETS.iter().map(|&b| (b as f64 * scale).round() as usize).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub sizes: SplitSizes,
    pub grid: Grid,
    pub acquisition: AcquisitionConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            sizes: SplitSizes { train: 40, dev: 100, test: 200 },
            grid: Grid::default(),
            acquisition: AcquisitionConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.train < 2 || !self.sizes.train.is_multiple_of(2) {
            return Err(Error::config("target train size must be even and at least 2"));
        }
        if self.sizes.dev == 0 || self.sizes.test == 0 {
            return Err(Error::config("target dev and test sizes must be positive"));
        }
        self.acquisition.gbdt.validate()
    }

    fn model_spec(&self, classes: usize) -> ModelSpec {
        ModelSpec { classes, dropout_rate: self.acquisition.dropout_rate }
    }
}

/// Seed of the grid search that trains the final model.
pub fn final_seed(target: &str, seed: u64) -> u64 {
    seeds::derive(seed, &["final", target])
}

pub fn acquisition_seed(spec: &AcquisitionSpec, target: &str, n: usize, seed: u64) -> u64 {
    seeds::derive(seed, &["acquire", &spec.key(), target, &n.to_string()])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub method: AcquisitionSpec,
    pub target: String,
    pub n: usize,
    pub seed: u64,
    pub acquisition_seed: u64,
    /// Test accuracy of the final model.
    pub score: f64,
    /// Test accuracy with no extra labeled data.
    pub baseline_score: f64,
    pub hyper: Hyper,
    pub histogram: BTreeMap<String, usize>,
    pub chosen: Vec<String>,
    #[serde(skip)]
    pub ranking: Option<Ranking>,
    pub rca: Option<RcaOutcome>,
}

impl CellResult {
    pub fn improvement(&self) -> f64 {
        self.score - self.baseline_score
    }
}

pub fn histogram(split: &PoolSplit, ids: &[String]) -> BTreeMap<String, usize> {
    let domain: BTreeMap<&str, &str> = split.source.iter().map(|e| (e.id.as_str(), e.domain.as_str())).collect();
    let mut h = BTreeMap::new();
    for id in ids {
        if let Some(d) = domain.get(id.as_str()) {
            *h.entry(d.to_string()).or_insert(0) += 1;
        }
    }
    h
}

/// Grid-searches a model on target train plus the annotated `chosen` ids and
/// scores it on target test.
pub fn train_and_score(split: &PoolSplit, chosen: &[String], classes: usize, cfg: &HarnessConfig, seed: u64) -> Result<(f64, Hyper)> {
    let mut train = split.full_train();
    train.extend(split.annotate(chosen)?);
    let (m, hyper) = model::grid_search(&train, &split.dev, &cfg.model_spec(classes), &cfg.grid, seed)?;
    Ok((model::evaluate_accuracy(&m, &split.test)?, hyper))
}

/// Target-only test score for `(target, seed)`.
pub fn baseline_score(pool: &Pool, target: &str, cfg: &HarnessConfig, seed: u64) -> Result<f64> {
    let split = make_pool_split(pool, target, cfg.sizes, seed, SplitMode::Plain)?;
    Ok(train_and_score(&split, &[], pool.classes(), cfg, final_seed(target, seed))?.0)
}

pub fn run_cell(pool: &Pool, spec: &AcquisitionSpec, target: &str, n: usize, cfg: &HarnessConfig, seed: u64) -> Result<CellResult> {
    run_cell_with_baseline(pool, spec, target, n, cfg, seed, None)
}

/// [`run_cell`] with an optional precomputed baseline score.
pub fn run_cell_with_baseline(
    pool: &Pool,
    spec: &AcquisitionSpec,
    target: &str,
    n: usize,
    cfg: &HarnessConfig,
    seed: u64,
    baseline: Option<f64>,
) -> Result<CellResult> {
    let tag = |e: Error| Error::Cell { method: spec.key(), target: target.to_string(), source: Box::new(e) };
    (|| {
        cfg.validate()?;
        let split = make_pool_split(pool, target, cfg.sizes, seed, spec.split_mode())?;
        if n > split.source.len() {
            return Err(Error::BudgetExceedsPool { n, available: split.source.len() });
        }
        let acq_seed = acquisition_seed(spec, target, n, seed);
        let acquired = acquisition::acquire(&split, spec, pool.classes(), &cfg.acquisition, n, acq_seed)?;
        let chosen = acquisition::select(&acquired.choice, &split, n, acq_seed)?;
        let (score, hyper) = train_and_score(&split, &chosen, pool.classes(), cfg, final_seed(target, seed))?;
        let baseline_score = match baseline {
            Some(b) => b,
            None => baseline_score(pool, target, cfg, seed)?,
        };
        Ok(CellResult {
            method: *spec,
            target: target.to_string(),
            n,
            seed,
            acquisition_seed: acq_seed,
            score,
            baseline_score,
            hyper,
            histogram: histogram(&split, &chosen),
            chosen,
            ranking: Some(acquired.ranking),
            rca: acquired.rca,
        })
    })()
    .map_err(tag)
}

/// Re-scores a recorded cell from its chosen ids, skipping acquisition.
pub fn replay_cell(pool: &Pool, cell: &CellResult, cfg: &HarnessConfig) -> Result<f64> {
    let split = make_pool_split(pool, &cell.target, cfg.sizes, cell.seed, cell.method.split_mode())?;
    Ok(train_and_score(&split, &cell.chosen, pool.classes(), cfg, final_seed(&cell.target, cell.seed))?.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellError {
    pub method: String,
    pub target: String,
    pub n: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixResult {
    pub cells: Vec<CellResult>,
    pub errors: Vec<CellError>,
}

#[derive(Debug, Clone)]
pub struct MatrixPlan {
    pub specs: Vec<AcquisitionSpec>,
    pub targets: Vec<String>,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl MatrixPlan {
    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() || self.targets.is_empty() || self.budgets.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("experiment matrix needs at least one method, target, budget and seed"));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.specs.len() * self.targets.len() * self.budgets.len() * self.seeds.len()
    }
}

/// Runs every (method, target, budget, seed) cell. Failing cells become
/// error records; results are ordered by target, seed, budget, method.
pub fn run_matrix(pool: &Pool, plan: &MatrixPlan, cfg: &HarnessConfig, jobs: usize) -> Result<MatrixResult> {
    plan.validate()?;
    cfg.validate()?;
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    threads.install(|| {
        let base_keys: Vec<(&String, u64)> = plan.targets.iter().flat_map(|t| plan.seeds.iter().map(move |&s| (t, s))).collect();
        let baselines: BTreeMap<(String, u64), std::result::Result<f64, String>> = base_keys
            .par_iter()
            .map(|(t, s)| (((*t).clone(), *s), baseline_score(pool, t, cfg, *s).map_err(|e| e.to_string())))
            .collect();

        let mut jobs_list = Vec::with_capacity(plan.cell_count());
        for t in &plan.targets {
            for &s in &plan.seeds {
                for &n in &plan.budgets {
                    for spec in &plan.specs {
                        jobs_list.push((spec, t, n, s));
                    }
                }
            }
        }
        let outcomes: Vec<std::result::Result<CellResult, CellError>> = jobs_list
            .par_iter()
            .map(|&(spec, t, n, s)| {
                let record = |message: String| CellError { method: spec.key(), target: t.clone(), n, seed: s, message };
                let base = baselines[&(t.clone(), s)].clone().map_err(&record)?;
                run_cell_with_baseline(pool, spec, t, n, cfg, s, Some(base)).map_err(|e| record(e.to_string()))
            })
            .collect();
        let mut out = MatrixResult::default();
        for o in outcomes {
            match o {
                Ok(c) => out.cells.push(c),
                Err(e) => {
                    log::warn!("cell {} / {} / n={} / seed={} failed: {}", e.method, e.target, e.n, e.seed, e.message);
                    out.errors.push(e)
                }
            }
        }
        Ok(out)
    })
}

pub const SCORES_HEADER: [&str; 11] =
    ["method", "direction", "space", "variant", "strategy", "target", "n", "seed", "score", "baseline_score", "improvement"];

pub fn write_scores_csv(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SCORES_HEADER)?;
    for c in cells {
        let direction = c.ranking.as_ref().map_or("", |r| direction_name(r.direction()));
        w.write_record([
            c.method.key(),
            direction.to_string(),
            c.method.space().map_or("", |s| s.name()).to_string(),
            c.method.fields().map_or("", |f| f.name()).to_string(),
            c.method.strategy().name().to_string(),
            c.target.clone(),
            c.n.to_string(),
            c.seed.to_string(),
            format!("{:.6}", c.score),
            format!("{:.6}", c.baseline_score),
            format!("{:.6}", c.improvement()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Descending => "descending",
        Direction::Ascending => "ascending",
    }
}

pub fn parse_direction(s: &str) -> Result<Direction> {
    match s {
        "descending" => Ok(Direction::Descending),
        "ascending" => Ok(Direction::Ascending),
        other => Err(Error::Parse { line: 0, message: format!("unknown direction {other:?}") }),
    }
}

/// File-name-safe form of a method key (`*` becomes `-star`).
pub fn file_key(spec: &AcquisitionSpec) -> String {
    spec.key().replace('*', "-star")
}

/// One CSV per cell plus `index.csv` (file, method, family, target, n, seed,
/// direction).
pub fn write_rankings(dir: &Path, cells: &[CellResult]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let index_path = dir.join("index.csv");
    let mut index = csv::Writer::from_path(&index_path)?;
    index.write_record(["file", "method", "family", "target", "n", "seed", "direction"])?;
    for c in cells {
        let Some(r) = &c.ranking else { continue };
        let name = format!("{}__{}__n{}__s{}.csv", c.target, file_key(&c.method), c.n, c.seed);
        let path = dir.join(&name);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        r.write_csv(BufWriter::new(f))?;
        index.write_record([
            name,
            c.method.key(),
            c.method.family().to_string(),
            c.target.clone(),
            c.n.to_string(),
            c.seed.to_string(),
            direction_name(r.direction()).to_string(),
        ])?;
    }
    index.flush().map_err(|e| Error::io(&index_path, e))
}

pub fn write_errors_csv(path: &Path, errors: &[CellError]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "target", "n", "seed", "message"])?;
    for e in errors {
        w.write_record([e.method.clone(), e.target.clone(), e.n.to_string(), e.seed.to_string(), e.message.clone()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-cell details (chosen ids, histogram, hyper-parameters) as JSON lines.
pub fn write_cells_jsonl(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut out = String::new();
    for c in cells {
        out.push_str(&serde_json::to_string(c)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Optimal domain search
// ---------------------------------------------------------------------------

/// `C(n, k)` without overflow for the sizes used here.
pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u128, |acc, i| acc * u128::from(n - i) / u128::from(i + 1))
}

/// Number of ways to put `units` identical units into `parts` ordered bins.
pub fn composition_count(units: usize, parts: usize) -> u128 {
    if parts == 0 {
        return u128::from(units == 0);
    }
    binomial((units + parts - 1) as u64, (parts - 1) as u64)
}

/// All weak compositions of `units` into `parts` bins, lexicographically
/// descending (first bin largest first).
pub fn weak_compositions(units: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(units: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(units);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=units).rev() {
            prefix.push(first);
            rec(units - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts == 0 {
        if units == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(units, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSettings {
    /// Target examples always in the training set.
    pub in_domain: usize,
    /// Examples per unit.
    pub increment: usize,
    /// Total training set size.
    pub total: usize,
    /// Maximum number of compositions to evaluate.
    pub cap: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositionScore {
    /// Units per source domain.
    pub units: BTreeMap<String, usize>,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub target: String,
    pub domains: Vec<String>,
    /// Sorted by score, best first.
    pub compositions: Vec<CompositionScore>,
    pub mean_score: f64,
}

/// Scores every split of the non-target budget across source domains in
/// `increment`-sized units. Each domain's examples are drawn as prefixes of
/// one seeded shuffle, so compositions differ only in counts.
pub fn optimal_domain_search(pool: &Pool, target: &str, settings: &SearchSettings, cfg: &HarnessConfig, seed: u64) -> Result<SearchResult> {
    if settings.increment == 0 || settings.total < settings.in_domain {
        return Err(Error::config("search needs a positive increment and total >= in-domain count"));
    }
    let rest = settings.total - settings.in_domain;
    if !rest.is_multiple_of(settings.increment) {
        return Err(Error::config(format!("{rest} extra examples are not a multiple of increment {}", settings.increment)));
    }
    let units = rest / settings.increment;
    let sizes = SplitSizes { train: settings.in_domain, ..cfg.sizes };
    let split = make_pool_split(pool, target, sizes, seed, SplitMode::Plain)?;
    let domains = split.source_domains();
    let count = composition_count(units, domains.len());
    if count > settings.cap as u128 {
        return Err(Error::EnumerationCap { count, cap: settings.cap });
    }
    let mut orders: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for e in &split.source {
        orders.entry(e.domain.as_str()).or_default().push(e.id.clone());
    }
    for (d, ids) in orders.iter_mut() {
        ids.shuffle(&mut seeds::rng(seeds::derive(seed, &["search", d])));
    }
    for d in &domains {
        let available = orders[d.as_str()].len();
        if available < units * settings.increment {
            return Err(Error::InsufficientExamples { domain: d.clone(), needed: units * settings.increment, available });
        }
    }
    let fseed = final_seed(target, seed);
    let mut scored = weak_compositions(units, domains.len())
        .into_par_iter()
        .map(|comp| {
            let chosen: Vec<String> =
                domains.iter().zip(&comp).flat_map(|(d, &u)| orders[d.as_str()][..u * settings.increment].iter().cloned()).collect();
            let (score, _) = train_and_score(&split, &chosen, pool.classes(), cfg, fseed)?;
            Ok(CompositionScore { units: domains.iter().cloned().zip(comp).collect(), score })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_score = scored.iter().map(|c| c.score).sum::<f64>() / scored.len().max(1) as f64;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(SearchResult { target: target.to_string(), domains, compositions: scored, mean_score })
}

// ---------------------------------------------------------------------------
// Domains vs examples ablation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    /// Sample standard error; 0 for fewer than two values.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStderr { mean: f64::NAN, stderr: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return MeanStderr { mean, stderr: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        MeanStderr { mean, stderr: (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub histogram: BTreeMap<String, usize>,
    pub top: Vec<String>,
    pub random_within: Vec<String>,
    pub bottom: Vec<String>,
    pub top_score: f64,
    pub random_within_score: f64,
    pub bottom_score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationResult {
    pub method: AcquisitionSpec,
    pub target: String,
    pub n: usize,
    pub runs: Vec<AblationRun>,
    pub top_score: MeanStderr,
    pub random_within_score: MeanStderr,
    pub bottom_score: MeanStderr,
}

/// The three selections sharing the reference ranking's top-`n` domain
/// histogram: the top-ranked examples, uniform draws within each domain,
/// and each domain's lowest-ranked examples.
pub fn ablation_selections(ranking: &Ranking, n: usize, seed: u64) -> (BTreeMap<String, usize>, Vec<String>, Vec<String>, Vec<String>) {
    let entries = ranking.entries();
    let top: Vec<String> = entries.iter().take(n).map(|e| e.id.clone()).collect();
    let mut hist: BTreeMap<String, usize> = BTreeMap::new();
    for e in entries.iter().take(n) {
        *hist.entry(e.domain.clone()).or_insert(0) += 1;
    }
    let mut by_domain: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in entries {
        by_domain.entry(e.domain.as_str()).or_default().push(e.id.as_str());
    }
    let mut random_within = Vec::with_capacity(n);
    let mut bottom = Vec::with_capacity(n);
    for (d, &k) in &hist {
        let ranked = &by_domain[d.as_str()];
        bottom.extend(ranked[ranked.len() - k..].iter().map(|s| s.to_string()));
        let mut shuffled: Vec<&str> = ranked.clone();
        shuffled.sort_unstable();
        shuffled.shuffle(&mut seeds::rng(seeds::derive(seed, &["ablation-random", d])));
        random_within.extend(shuffled[..k].iter().map(|s| s.to_string()));
    }
    (hist, top, random_within, bottom)
}

pub fn domain_vs_example_ablation(
    pool: &Pool,
    spec: &AcquisitionSpec,
    target: &str,
    n: usize,
    cfg: &HarnessConfig,
    seeds_list: &[u64],
) -> Result<AblationResult> {
    if spec.strategy() != Strategy::SinglePool {
        return Err(Error::config(format!("ablation needs a single-pool ranking method, got {spec}")));
    }
    cfg.validate()?;
    let tag = |e: Error| Error::Cell { method: spec.key(), target: target.to_string(), source: Box::new(e) };
    let runs = seeds_list
        .par_iter()
        .map(|&seed| -> Result<AblationRun> {
            let split = make_pool_split(pool, target, cfg.sizes, seed, spec.split_mode())?;
            if n > split.source.len() {
                return Err(Error::BudgetExceedsPool { n, available: split.source.len() });
            }
            let acq_seed = acquisition_seed(spec, target, n, seed);
            let acquired = acquisition::acquire(&split, spec, pool.classes(), &cfg.acquisition, n, acq_seed)?;
            let Choice::Ranking(ranking) = &acquired.choice else { unreachable!("single-pool method") };
            let (histogram, top, random_within, bottom) = ablation_selections(ranking, n, acq_seed);
            let fseed = final_seed(target, seed);
            let score = |ids: &[String]| train_and_score(&split, ids, pool.classes(), cfg, fseed).map(|r| r.0);
            Ok(AblationRun {
                seed,
                top_score: score(&top)?,
                random_within_score: score(&random_within)?,
                bottom_score: score(&bottom)?,
                histogram,
                top,
                random_within,
                bottom,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(tag)?;
    let stat = |f: fn(&AblationRun) -> f64| MeanStderr::of(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(AblationResult {
        method: *spec,
        target: target.to_string(),
        n,
        top_score: stat(|r| r.top_score),
        random_within_score: stat(|r| r.random_within_score),
        bottom_score: stat(|r| r.bottom_score),
        runs,
    })
}
