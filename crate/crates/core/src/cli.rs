//! The `mdal` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or runtime error, 3 some
//! matrix cells failed. Verbosity comes from `MDAL_LOG` (env_logger syntax).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, AcquisitionSpec, DalEFallback, RcaDenominator};
use crate::data::{self, make_pool_split, Pool};
use crate::error::{Error, Result};
use crate::gbdt::GbdtParams;
use crate::harness::{self, HarnessConfig, MatrixPlan, SearchSettings};
use crate::metrics::{self, RankingRecord, TauMatrix};
use crate::seeds;
use crate::synthetic::{self, SyntheticConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "mdal", version, about = "Multi-domain active learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic pool (examples, embedding sidecar, dataset.json).
    Gen(GenArgs),
    /// Write one method's ranking of the source pool.
    Rank(RankArgs),
    /// Run the full method x target x budget x seed matrix.
    Run(CommonArgs),
    /// Score every composition of source-domain budgets.
    Search(CommonArgs),
    /// Compare top, random-within-domain and bottom selections.
    Ablate(CommonArgs),
    /// Tau matrices and domain distances for a run directory.
    Analyze(AnalyzeArgs),
    /// Check a dataset directory or examples file.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, value_parser = ["paper", "relaxed"])]
    pub gbdt_preset: Option<String>,
    #[arg(long, value_parser = ["tau", "paper"])]
    pub rca_denominator: Option<String>,
    #[arg(long, value_parser = ["error", "dal-t"])]
    pub dal_e_fallback: Option<String>,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write embeddings in the binary sidecar format.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub target: String,
    /// Budget, only used by allocation methods.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    pub run_dir: PathBuf,
    /// Output directory; defaults to `<run_dir>/analysis`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Dataset directory (with dataset.json) or examples JSONL file.
    pub path: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRef {
    /// Examples JSONL, relative to the config file.
    pub path: PathBuf,
    pub classes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    pub target: Option<String>,
    pub in_domain: usize,
    pub increment: usize,
    pub total: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    5000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationConfig {
    pub method: AcquisitionSpec,
    pub target: Option<String>,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig {
    pub sample_size: usize,
    pub projections: usize,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig { sample_size: 3000, projections: metrics::DEFAULT_PROJECTIONS }
    }
}

/// `run`, `rank`, `search` and `ablate` configuration. Exactly one of
/// `dataset` and `synthetic` must be set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub dataset: Option<DatasetRef>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    /// Method keys; defaults to the classification suite.
    #[serde(default)]
    pub methods: Vec<AcquisitionSpec>,
    /// Target domains; defaults to every domain.
    #[serde(default)]
    pub targets: Vec<String>,
    /// Explicit budgets; otherwise the paper budgets times `scale`.
    #[serde(default)]
    pub budgets: Vec<usize>,
    #[serde(default)]
    pub scale: Option<f64>,
    /// Explicit replicate seeds; otherwise `replicates` seeds derived from
    /// the global seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub harness: HarnessConfig,
    #[serde(default)]
    pub gbdt_preset: Option<String>,
    #[serde(default)]
    pub search: Option<SearchConfig>,
    #[serde(default)]
    pub ablation: Option<AblationConfig>,
    #[serde(default)]
    pub distance: DistanceConfig,
}

/// A config file after flag overrides, plus where it came from.
pub struct Loaded {
    pub config: RunConfig,
    pub raw: serde_json::Value,
    pub base_dir: PathBuf,
    pub jobs: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.dataset, &self.synthetic) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::config("config needs exactly one of \"dataset\" and \"synthetic\""));
            }
            _ => {}
        }
        if let Some(s) = self.scale {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::config("scale must be positive"));
            }
        }
        self.harness.validate()
    }

    pub fn load_pool(&self, base_dir: &Path) -> Result<Pool> {
        match (&self.dataset, &self.synthetic) {
            (Some(d), None) => data::load_examples(&base_dir.join(&d.path), d.classes),
            (None, Some(s)) => synthetic::gen_synthetic(s),
            _ => Err(Error::config("config needs exactly one of \"dataset\" and \"synthetic\"")),
        }
    }

    pub fn methods(&self) -> Vec<AcquisitionSpec> {
        if self.methods.is_empty() { AcquisitionSpec::classification_suite() } else { self.methods.clone() }
    }

    pub fn targets(&self, pool: &Pool) -> Vec<String> {
        if self.targets.is_empty() { pool.domains() } else { self.targets.clone() }
    }

    pub fn budgets(&self) -> Vec<usize> {
        if self.budgets.is_empty() {
            harness::scaled_budgets(self.scale.unwrap_or(harness::DEFAULT_SCALE))
        } else {
            self.budgets.clone()
        }
    }

    /// Replicate `i` uses `derive_index(seed, "replicate", i)`.
    pub fn replicate_seeds(&self) -> Vec<u64> {
        if !self.seeds.is_empty() {
            return self.seeds.clone();
        }
        (0..self.replicates.unwrap_or(harness::DEFAULT_REPLICATES)).map(|i| seeds::derive_index(self.seed, "replicate", i)).collect()
    }
}

pub fn load_config(args: &CommonArgs) -> Result<Loaded> {
    let text = fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let mut config: RunConfig = serde_json::from_value(raw.clone())?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(s) = args.scale {
        config.scale = Some(s);
        config.budgets.clear();
    }
    let preset = args.gbdt_preset.clone().or(config.gbdt_preset.clone());
    if let Some(p) = preset {
        config.harness.acquisition.gbdt = GbdtParams::preset(&p)?;
        config.gbdt_preset = Some(p);
    }
    match args.rca_denominator.as_deref() {
        Some("paper") => config.harness.acquisition.rca_denominator = RcaDenominator::Paper,
        Some(_) => config.harness.acquisition.rca_denominator = RcaDenominator::Tau,
        None => {}
    }
    match args.dal_e_fallback.as_deref() {
        Some("dal-t") => config.harness.acquisition.dal_e_fallback = DalEFallback::DalT,
        Some(_) => config.harness.acquisition.dal_e_fallback = DalEFallback::Error,
        None => {}
    }
    config.validate()?;
    let base_dir = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let jobs = args.jobs.unwrap_or(0);
    Ok(Loaded { config, raw, base_dir, jobs })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: usize,
    pub examples: String,
    pub domains: Vec<String>,
    pub generator: Option<SyntheticConfig>,
}

fn cmd_gen(args: &GenArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let mut cfg: SyntheticConfig = serde_json::from_str(&text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let pool = synthetic::gen_synthetic(&cfg)?;
    create_dir(&args.out)?;
    let examples = args.out.join("examples.jsonl");
    data::write_examples_jsonl(&examples, pool.examples())?;
    let (jsonl, bin, _) = data::sidecar_paths(&examples);
    if args.binary {
        data::write_embeddings_bin(&bin, pool.examples())?;
    } else {
        data::write_embeddings_jsonl(&jsonl, pool.examples())?;
    }
    write_json(
        &args.out.join("dataset.json"),
        &DatasetManifest { classes: pool.classes(), examples: "examples.jsonl".into(), domains: pool.domains(), generator: Some(cfg) },
    )?;
    println!("wrote {} examples in {} domains to {}", pool.len(), pool.domains().len(), args.out.display());
    Ok(EXIT_OK)
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let (examples, classes) = if args.path.is_dir() {
        let manifest_path = args.path.join("dataset.json");
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        (args.path.join(m.examples), args.classes.unwrap_or(m.classes))
    } else {
        let classes = args.classes.ok_or_else(|| Error::config("--classes is required for a bare examples file"))?;
        (args.path.clone(), classes)
    };
    let pool = data::load_examples(&examples, classes)?;
    let labeled = pool.examples().iter().filter(|e| e.label.is_some()).count();
    let embedded = pool.examples().iter().filter(|e| e.agnostic_embedding.is_some()).count();
    println!(
        "ok: {} examples, {} labeled, {} with embeddings (dim {}), domains: {}",
        pool.len(),
        labeled,
        embedded,
        pool.embedding_dim().map_or("-".into(), |d| d.to_string()),
        pool.domains().join(",")
    );
    Ok(EXIT_OK)
}

fn cmd_rank(args: &RankArgs) -> Result<i32> {
    let loaded = load_config(&args.common)?;
    let cfg = &loaded.config;
    let pool = cfg.load_pool(&loaded.base_dir)?;
    let spec: AcquisitionSpec = args.method.parse()?;
    let seed = cfg.replicate_seeds()[0];
    let n = args.n.unwrap_or_else(|| cfg.budgets()[0]);
    let split = make_pool_split(&pool, &args.target, cfg.harness.sizes, seed, spec.split_mode())?;
    let acq_seed = harness::acquisition_seed(&spec, &args.target, n, seed);
    let acquired = acquisition::acquire(&split, &spec, pool.classes(), &cfg.harness.acquisition, n, acq_seed)?;
    if let Some(parent) = args.common.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let f = fs::File::create(&args.common.out).map_err(|e| Error::io(&args.common.out, e))?;
    acquired.ranking.write_csv(std::io::BufWriter::new(f))?;
    Ok(EXIT_OK)
}

fn thread_count(jobs: usize) -> usize {
    if jobs == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { jobs }
}

fn cmd_run(args: &CommonArgs) -> Result<i32> {
    let loaded = load_config(args)?;
    let cfg = &loaded.config;
    let pool = cfg.load_pool(&loaded.base_dir)?;
    let plan = MatrixPlan { specs: cfg.methods(), targets: cfg.targets(&pool), budgets: cfg.budgets(), seeds: cfg.replicate_seeds() };
    log::info!("running {} cells", plan.cell_count());
    let result = harness::run_matrix(&pool, &plan, &cfg.harness, thread_count(loaded.jobs))?;

    create_dir(&args.out)?;
    harness::write_scores_csv(&args.out.join("scores.csv"), &result.cells)?;
    harness::write_rankings(&args.out.join("rankings"), &result.cells)?;
    harness::write_errors_csv(&args.out.join("errors.csv"), &result.errors)?;
    harness::write_cells_jsonl(&args.out.join("cells.jsonl"), &result.cells)?;
    let manifest = serde_json::json!({
        "tool": "mdal",
        "version": env!("CARGO_PKG_VERSION"),
        "config": loaded.raw,
        "config_dir": fs::canonicalize(&loaded.base_dir).unwrap_or(loaded.base_dir.clone()),
        "resolved": {
            "methods": plan.specs,
            "targets": plan.targets,
            "budgets": plan.budgets,
            "seeds": plan.seeds,
            "harness": cfg.harness,
        },
        "cells": result.cells.len(),
        "errors": result.errors.len(),
        "distance_metric": "W1",
    });
    write_json(&args.out.join("manifest.json"), &manifest)?;
    println!("{} cells ok, {} failed; results in {}", result.cells.len(), result.errors.len(), args.out.display());
    Ok(if result.errors.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn first_target(explicit: &Option<String>, pool: &Pool, cfg: &RunConfig) -> String {
    explicit.clone().unwrap_or_else(|| cfg.targets(pool)[0].clone())
}

fn cmd_search(args: &CommonArgs) -> Result<i32> {
    let loaded = load_config(args)?;
    let cfg = &loaded.config;
    let search = cfg.search.as_ref().ok_or_else(|| Error::config("config has no \"search\" section"))?;
    let pool = cfg.load_pool(&loaded.base_dir)?;
    let target = first_target(&search.target, &pool, cfg);
    let settings = SearchSettings { in_domain: search.in_domain, increment: search.increment, total: search.total, cap: search.cap };
    let threads = rayon::ThreadPoolBuilder::new().num_threads(thread_count(loaded.jobs)).build().map_err(|e| Error::config(e.to_string()))?;
    let result = threads.install(|| harness::optimal_domain_search(&pool, &target, &settings, &cfg.harness, cfg.replicate_seeds()[0]))?;

    create_dir(&args.out)?;
    let path = args.out.join("search.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header: Vec<String> = result.domains.clone();
    header.push("score".into());
    w.write_record(&header)?;
    for c in &result.compositions {
        let mut rec: Vec<String> = result.domains.iter().map(|d| c.units[d].to_string()).collect();
        rec.push(format!("{:.6}", c.score));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&args.out.join("search.json"), &result)?;
    println!("{} compositions, mean score {:.4}, best {:.4}", result.compositions.len(), result.mean_score, result.compositions[0].score);
    Ok(EXIT_OK)
}

fn cmd_ablate(args: &CommonArgs) -> Result<i32> {
    let loaded = load_config(args)?;
    let cfg = &loaded.config;
    let ab = cfg.ablation.as_ref().ok_or_else(|| Error::config("config has no \"ablation\" section"))?;
    let pool = cfg.load_pool(&loaded.base_dir)?;
    let target = first_target(&ab.target, &pool, cfg);
    let threads = rayon::ThreadPoolBuilder::new().num_threads(thread_count(loaded.jobs)).build().map_err(|e| Error::config(e.to_string()))?;
    let result =
        threads.install(|| harness::domain_vs_example_ablation(&pool, &ab.method, &target, ab.n, &cfg.harness, &cfg.replicate_seeds()))?;
    create_dir(&args.out)?;
    let path = args.out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["selection", "mean", "stderr"])?;
    for (name, s) in [("top", result.top_score), ("random_within", result.random_within_score), ("bottom", result.bottom_score)] {
        w.write_record([name.to_string(), format!("{:.6}", s.mean), format!("{:.6}", s.stderr)])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&args.out.join("ablation.json"), &result)?;
    println!(
        "top {:.4}  random-within {:.4}  bottom {:.4}",
        result.top_score.mean, result.random_within_score.mean, result.bottom_score.mean
    );
    Ok(EXIT_OK)
}

#[derive(Deserialize)]
struct IndexRow {
    file: String,
    method: String,
    family: String,
    target: String,
    n: usize,
    seed: u64,
    direction: String,
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32> {
    let rank_dir = args.run_dir.join("rankings");
    let index_path = rank_dir.join("index.csv");
    let mut reader = csv::Reader::from_path(&index_path)?;
    let rows: Vec<IndexRow> = reader.deserialize().collect::<std::result::Result<_, _>>()?;

    let mut methods: Vec<String> = Vec::new();
    let mut families: BTreeMap<String, String> = BTreeMap::new();
    let mut by_target: BTreeMap<String, BTreeMap<String, BTreeMap<String, RankingRecord>>> = BTreeMap::new();
    for row in &rows {
        if !methods.contains(&row.method) {
            methods.push(row.method.clone());
        }
        families.insert(row.method.clone(), row.family.clone());
        let path = rank_dir.join(&row.file);
        let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let record = RankingRecord { entries: data::Ranking::read_csv(f)?, direction: harness::parse_direction(&row.direction)? };
        by_target
            .entry(row.target.clone())
            .or_default()
            .entry(format!("n{}-s{}", row.n, row.seed))
            .or_default()
            .insert(row.method.clone(), record);
    }
    if methods.is_empty() {
        return Err(Error::Empty("run directory has no rankings"));
    }

    let m = methods.len();
    let mut per_target = BTreeMap::new();
    let mut sum = vec![vec![0.0; m]; m];
    let mut count = vec![vec![0usize; m]; m];
    for (target, groups) in &by_target {
        let t = TauMatrix::from_rankings(&methods, groups)?;
        for i in 0..m {
            for j in 0..m {
                if t.values[i][j].is_finite() {
                    sum[i][j] += t.values[i][j];
                    count[i][j] += 1;
                }
            }
        }
        per_target.insert(target.clone(), t.values);
    }
    let values = (0..m).map(|i| (0..m).map(|j| if count[i][j] > 0 { sum[i][j] / count[i][j] as f64 } else { f64::NAN }).collect()).collect();
    let tau = TauMatrix { methods: methods.clone(), values, per_target };

    let out = args.out.clone().unwrap_or_else(|| args.run_dir.join("analysis"));
    create_dir(&out)?;
    let file = |name: &str| -> Result<fs::File> {
        let p = out.join(name);
        fs::File::create(&p).map_err(|e| Error::io(&p, e))
    };
    tau.write_csv(file("tau.csv")?)?;
    metrics::write_optional_rows(file("tau_normalized.csv")?, "method", &methods, &metrics::normalize_rows(&tau, &families))?;
    for (target, mat) in &tau.per_target {
        metrics::write_matrix(file(&format!("tau_{target}.csv"))?, "method", &methods, mat)?;
    }

    let manifest_path = args.run_dir.join("manifest.json");
    if manifest_path.exists() {
        analyze_distances(&manifest_path, &out, args.seed, by_target.keys().cloned().collect())?;
    }
    println!("analysis of {} methods over {} targets written to {}", m, by_target.len(), out.display());
    Ok(EXIT_OK)
}

fn analyze_distances(manifest_path: &Path, out: &Path, seed: Option<u64>, targets: Vec<String>) -> Result<()> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: serde_json::Value = serde_json::from_str(&text)?;
    let cfg: RunConfig = serde_json::from_value(manifest["config"].clone())?;
    let base_dir: PathBuf = manifest["config_dir"].as_str().map(PathBuf::from).unwrap_or_default();
    let pool = cfg.load_pool(&base_dir)?;
    let seed = seed.unwrap_or(cfg.seed);

    let path = out.join("wasserstein.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["target", "w1_mean", "w1_min", "w1_max", "w1_variance"])?;
    let pair_path = out.join("wasserstein_pairs.csv");
    let mut pairs = csv::Writer::from_path(&pair_path)?;
    pairs.write_record(["target", "source", "w1"])?;
    let mut summaries = BTreeMap::new();
    for t in &targets {
        let d = metrics::domain_distances(&pool, t, cfg.distance.sample_size, cfg.distance.projections, seed)?;
        for (s, v) in &d {
            pairs.write_record([t.clone(), s.clone(), format!("{v:.6}")])?;
        }
        let s = metrics::aggregate_domain_distances(&d)?;
        w.write_record([t.clone(), format!("{:.6}", s.mean), format!("{:.6}", s.min), format!("{:.6}", s.max), format!("{:.6}", s.variance)])?;
        summaries.insert(t.clone(), s);
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    pairs.flush().map_err(|e| Error::io(&pair_path, e))?;

    let scores_path = manifest_path.with_file_name("scores.csv");
    if scores_path.exists() {
        let mut r = csv::Reader::from_path(&scores_path)?;
        let mut imp: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for rec in r.records() {
            let rec = rec?;
            let v: f64 = rec[10].parse().map_err(|_| Error::Parse { line: 0, message: "bad improvement".into() })?;
            imp.entry((rec[5].to_string(), rec[0].to_string())).or_default().push(v);
        }
        let sp = out.join("distance_vs_improvement.csv");
        let mut w = csv::Writer::from_path(&sp)?;
        w.write_record(["target", "method", "mean_improvement", "w1_mean", "w1_min", "w1_max", "w1_variance"])?;
        for ((t, m), vals) in &imp {
            let Some(s) = summaries.get(t) else { continue };
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            w.write_record([
                t.clone(),
                m.clone(),
                format!("{mean:.6}"),
                format!("{:.6}", s.mean),
                format!("{:.6}", s.min),
                format!("{:.6}", s.max),
                format!("{:.6}", s.variance),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&sp, e))?;
    }
    Ok(())
}

pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("MDAL_LOG", "warn")).try_init();
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Rank(a) => cmd_rank(a),
        Command::Run(a) => cmd_run(a),
        Command::Search(a) => cmd_search(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
