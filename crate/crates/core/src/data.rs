//! Examples, pools, target/source splits and dataset ingestion.
//!
//! Examples file: UTF-8 JSONL, one object per line,
//! `{"id": str, "domain": str, "fields": {str: str}, "label": int|null}`.
//!
//! Embedding sidecars attach agnostic embeddings by id, either as JSONL
//! (`{"id": str, "vec": [float, ...]}`) or as a binary file: the 8-byte magic
//! `MDALEMB1`, little-endian `u32` count and `u32` dim, then `count * dim`
//! little-endian `f32` values in id-sorted order. The binary file is paired
//! with a `.ids` text file (same stem) listing one id per line in that order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"MDALEMB1";

/// Field names used by the similarity variants.
pub const FIELD_TEXT: &str = "text";
pub const FIELD_QUERY: &str = "query";
pub const FIELD_CONTEXT: &str = "context";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub domain: String,
    pub fields: BTreeMap<String, String>,
    pub label: Option<usize>,
    #[serde(skip)]
    pub agnostic_embedding: Option<Vec<f64>>,
    #[serde(skip)]
    pub specific_embedding: Option<Vec<f64>>,
}

impl Example {
    pub fn new(id: impl Into<String>, domain: impl Into<String>) -> Self {
        Example {
            id: id.into(),
            domain: domain.into(),
            fields: BTreeMap::new(),
            label: None,
            agnostic_embedding: None,
            specific_embedding: None,
        }
    }

    pub fn with_field(mut self, name: &str, value: impl Into<String>) -> Self {
        self.fields.insert(name.to_string(), value.into());
        self
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_embedding(mut self, v: Vec<f64>) -> Self {
        self.agnostic_embedding = Some(v);
        self
    }

    pub fn field(&self, name: &str) -> Result<&str> {
        self.fields.get(name).map(String::as_str).ok_or_else(|| Error::MissingField {
            id: self.id.clone(),
            field: name.to_string(),
        })
    }

    pub fn embedding(&self) -> Result<&[f64]> {
        self.agnostic_embedding.as_deref().ok_or_else(|| Error::MissingEmbedding {
            id: self.id.clone(),
            space: "agnostic",
        })
    }

    pub fn gold(&self) -> Result<usize> {
        self.label.ok_or_else(|| Error::MissingLabel { id: self.id.clone() })
    }
}

/// A validated collection of examples sharing one class count and one
/// embedding dimension.
#[derive(Debug, Clone)]
pub struct Pool {
    examples: Vec<Example>,
    classes: usize,
    index: HashMap<String, usize>,
}

impl Pool {
    pub fn new(examples: Vec<Example>, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::config("class count must be positive"));
        }
        let mut index = HashMap::with_capacity(examples.len());
        let mut dim: Option<usize> = None;
        for (i, ex) in examples.iter().enumerate() {
            if ex.domain.is_empty() {
                return Err(Error::EmptyDomain { id: ex.id.clone() });
            }
            if let Some(label) = ex.label {
                if label >= classes {
                    return Err(Error::LabelOutOfRange { id: ex.id.clone(), label, classes });
                }
            }
            if let Some(v) = &ex.agnostic_embedding {
                match dim {
                    None => dim = Some(v.len()),
                    Some(d) if d != v.len() => {
                        return Err(Error::Dimension { id: ex.id.clone(), expected: d, found: v.len() })
                    }
                    _ => {}
                }
            }
            if index.insert(ex.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
        }
        Ok(Pool { examples, classes, index })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.index.get(id).map(|&i| &self.examples[i])
    }

    /// Sorted, de-duplicated domain names.
    pub fn domains(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.examples.iter().map(|e| e.domain.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn domain_examples<'a>(&'a self, domain: &'a str) -> impl Iterator<Item = &'a Example> + 'a {
        self.examples.iter().filter(move |e| e.domain == domain)
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.examples.iter().find_map(|e| e.agnostic_embedding.as_ref().map(Vec::len))
    }

    /// Attaches agnostic embeddings by id. Every vector must share one dimension.
    pub fn attach_embeddings(&mut self, vectors: Vec<(String, Vec<f64>)>) -> Result<()> {
        let mut dim = self.embedding_dim();
        for (id, v) in vectors {
            let &i = self.index.get(&id).ok_or_else(|| Error::UnknownId(id.clone()))?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => return Err(Error::Dimension { id, expected: d, found: v.len() }),
                _ => {}
            }
            self.examples[i].agnostic_embedding = Some(v);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Plain,
    /// Halves the target training sample into `train` and `train_b`.
    Discriminator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }
}

/// Target splits plus the label-masked source pool.
#[derive(Debug, Clone)]
pub struct PoolSplit {
    pub target_domain: String,
    pub train: Vec<Example>,
    pub train_b: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    /// Source examples with labels removed. Gold labels are only reachable
    /// through [`PoolSplit::annotate`].
    pub source: Vec<Example>,
    pub seed: u64,
    oracle: HashMap<String, Option<usize>>,
}

impl PoolSplit {
    /// Both target training halves (the full labeled training sample).
    pub fn full_train(&self) -> Vec<Example> {
        self.train.iter().chain(&self.train_b).cloned().collect()
    }

    pub fn source_domains(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.source.iter().map(|e| e.domain.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Simulated annotator: returns labeled copies of the requested source
    /// examples, in request order.
    pub fn annotate(&self, ids: &[String]) -> Result<Vec<Example>> {
        let by_id: HashMap<&str, &Example> = self.source.iter().map(|e| (e.id.as_str(), e)).collect();
        ids.iter()
            .map(|id| {
                let ex = by_id.get(id.as_str()).ok_or_else(|| Error::UnknownId(id.clone()))?;
                let label = self.oracle.get(id).copied().flatten();
                let mut out = (*ex).clone();
                out.label = Some(label.ok_or_else(|| Error::MissingLabel { id: id.clone() })?);
                Ok(out)
            })
            .collect()
    }
}

/// Samples target splits uniformly without replacement and gathers every
/// other domain into the masked source pool.
///
/// The training sample is drawn identically in both modes, so the union of
/// `train` and `train_b` in discriminator mode equals `train` in plain mode
/// (up to one example dropped when the training size is odd).
pub fn make_pool_split(pool: &Pool, target_domain: &str, sizes: SplitSizes, seed: u64, mode: SplitMode) -> Result<PoolSplit> {
    if !pool.examples.iter().any(|e| e.domain == target_domain) {
        return Err(Error::UnknownDomain(target_domain.to_string()));
    }
    let mut target: Vec<&Example> = pool
        .examples
        .iter()
        .filter(|e| e.domain == target_domain && e.label.is_some())
        .collect();
    if target.len() < sizes.total() {
        return Err(Error::InsufficientExamples {
            domain: target_domain.to_string(),
            needed: sizes.total(),
            available: target.len(),
        });
    }
    target.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = seeds::rng(seeds::derive(seed, &["split", target_domain]));
    target.shuffle(&mut rng);

    let take = |range: std::ops::Range<usize>| -> Vec<Example> { target[range].iter().map(|e| (*e).clone()).collect() };
    let mut train = take(0..sizes.train);
    let dev = take(sizes.train..sizes.train + sizes.dev);
    let test = take(sizes.train + sizes.dev..sizes.total());
    let train_b = match mode {
        SplitMode::Plain => Vec::new(),
        SplitMode::Discriminator => {
            let half = sizes.train / 2;
            train.truncate(2 * half);
            train.split_off(half)
        }
    };

    let mut oracle = HashMap::new();
    let mut source: Vec<Example> = pool
        .examples
        .iter()
        .filter(|e| e.domain != target_domain)
        .map(|e| {
            oracle.insert(e.id.clone(), e.label);
            let mut masked = e.clone();
            masked.label = None;
            masked
        })
        .collect();
    if source.is_empty() {
        return Err(Error::NoSourceDomains(target_domain.to_string()));
    }
    source.sort_by(|a, b| a.id.cmp(&b.id));

    Ok(PoolSplit { target_domain: target_domain.to_string(), train, train_b, dev, test, source, seed, oracle })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub id: String,
    pub domain: String,
    pub score: f64,
    /// Secondary key, compared in the same direction as `score`.
    pub tiebreak: f64,
}

/// A total order over source examples.
///
/// Entries are sorted by score in `direction`, then by tiebreak in the same
/// direction, then by id ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    entries: Vec<RankEntry>,
    direction: Direction,
}

impl Ranking {
    pub fn new(mut entries: Vec<RankEntry>, direction: Direction) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        sort_entries(&mut entries, direction);
        Ok(Ranking { entries, direction })
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn top(&self, n: usize) -> Vec<String> {
        self.entries.iter().take(n).map(|e| e.id.clone()).collect()
    }

    /// Writes `rank,id,domain,score` with 1-based ranks.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rank", "id", "domain", "score"])?;
        for (i, e) in self.entries.iter().enumerate() {
            out.write_record([(i + 1).to_string(), e.id.clone(), e.domain.clone(), format!("{}", e.score)])?;
        }
        out.flush().map_err(|e| Error::io("<ranking csv>", e))?;
        Ok(())
    }

    /// Reads a ranking CSV back; the stored order is kept as is.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<RankEntry>> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let score: f64 = rec[3]
                .parse()
                .map_err(|_| Error::Parse { line: out.len() + 2, message: format!("bad score {:?}", &rec[3]) })?;
            out.push(RankEntry { id: rec[1].to_string(), domain: rec[2].to_string(), score, tiebreak: 0.0 });
        }
        Ok(out)
    }
}

fn sort_entries(entries: &mut [RankEntry], direction: Direction) {
    entries.sort_by(|a, b| {
        let primary = a.score.total_cmp(&b.score).then(a.tiebreak.total_cmp(&b.tiebreak));
        let primary = match direction {
            Direction::Ascending => primary,
            Direction::Descending => primary.reverse(),
        };
        primary.then_with(|| a.id.cmp(&b.id))
    });
}

/// Per-domain example budget for the domain-allocation strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub per_domain: BTreeMap<String, usize>,
    /// Domains in spill-over order (highest share first).
    pub priority: Vec<String>,
    pub total: usize,
}

impl Allocation {
    pub fn count(&self, domain: &str) -> usize {
        self.per_domain.get(domain).copied().unwrap_or(0)
    }
}

#[derive(Deserialize)]
struct ExampleRecord {
    id: String,
    domain: String,
    #[serde(default)]
    fields: BTreeMap<String, String>,
    label: Option<i64>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    id: String,
    vec: Vec<f64>,
}

/// Loads a JSONL examples file and, when present, its embedding sidecar
/// (`<stem>.emb.jsonl`, or `<stem>.emb.bin` with `<stem>.emb.ids`).
pub fn load_examples(path: &Path, classes: usize) -> Result<Pool> {
    let sidecar = find_sidecar(path);
    load_examples_with(path, classes, sidecar.as_deref())
}

pub fn sidecar_paths(examples: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let stem = examples.file_stem().and_then(|s| s.to_str()).unwrap_or("examples");
    let dir = examples.parent().unwrap_or_else(|| Path::new(""));
    (
        dir.join(format!("{stem}.emb.jsonl")),
        dir.join(format!("{stem}.emb.bin")),
        dir.join(format!("{stem}.emb.ids")),
    )
}

fn find_sidecar(path: &Path) -> Option<PathBuf> {
    let (jsonl, bin, _) = sidecar_paths(path);
    [jsonl, bin].into_iter().find(|p| p.exists())
}

pub fn load_examples_with(path: &Path, classes: usize, sidecar: Option<&Path>) -> Result<Pool> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        let label = match rec.label {
            None => None,
            Some(l) if l < 0 => return Err(Error::Parse { line: i + 1, message: format!("negative label {l}") }),
            Some(l) => Some(l as usize),
        };
        examples.push(Example {
            id: rec.id,
            domain: rec.domain,
            fields: rec.fields,
            label,
            agnostic_embedding: None,
            specific_embedding: None,
        });
    }
    let mut pool = Pool::new(examples, classes)?;
    if let Some(sidecar) = sidecar {
        let vectors = if sidecar.extension().is_some_and(|e| e == "jsonl") {
            read_embeddings_jsonl(sidecar)?
        } else {
            read_embeddings_bin(sidecar, &ids_path_for(sidecar))?
        };
        pool.attach_embeddings(vectors)?;
    }
    Ok(pool)
}

fn ids_path_for(bin: &Path) -> PathBuf {
    bin.with_extension("ids")
}

pub fn read_embeddings_jsonl(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if let Some((_, first)) = out.first() {
            if first.len() != rec.vec.len() {
                return Err(Error::Dimension { id: rec.id, expected: first.len(), found: rec.vec.len() });
            }
        }
        out.push((rec.id, rec.vec));
    }
    Ok(out)
}

pub fn read_embeddings_bin(path: &Path, ids_path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Parse { line: 0, message };
    if bytes.len() < 16 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(bad(format!("{} is not an MDALEMB1 file", path.display())));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != count * dim * 4 {
        return Err(bad(format!("expected {} payload bytes, found {}", count * dim * 4, body.len())));
    }
    let ids_text = fs::read_to_string(ids_path).map_err(|e| Error::io(ids_path, e))?;
    let ids: Vec<&str> = ids_text.lines().filter(|l| !l.is_empty()).collect();
    if ids.len() != count {
        return Err(bad(format!("{} lists {} ids for {count} vectors", ids_path.display(), ids.len())));
    }
    if let Some(w) = ids.windows(2).position(|w| w[0] >= w[1]) {
        return Err(Error::Parse { line: w + 2, message: "ids are not strictly sorted".into() });
    }
    Ok(ids
        .iter()
        .zip(body.chunks_exact(dim.max(1) * 4))
        .map(|(id, row)| {
            let v = row.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
            (id.to_string(), v)
        })
        .collect())
}

pub fn write_examples_jsonl(path: &Path, examples: &[Example]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_embeddings_jsonl(path: &Path, examples: &[Example]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        let Some(v) = &ex.agnostic_embedding else { continue };
        serde_json::to_writer(&mut w, &EmbeddingRecord { id: ex.id.clone(), vec: v.clone() })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the binary sidecar and its `.ids` companion (same stem).
pub fn write_embeddings_bin(path: &Path, examples: &[Example]) -> Result<()> {
    let mut rows: Vec<(&str, &[f64])> = examples
        .iter()
        .filter_map(|e| e.agnostic_embedding.as_deref().map(|v| (e.id.as_str(), v)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0));
    let dim = rows.first().map_or(0, |r| r.1.len());
    let mut bytes = Vec::with_capacity(16 + rows.len() * dim * 4);
    bytes.extend_from_slice(EMBEDDING_MAGIC);
    bytes.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    let mut ids = String::new();
    for (id, v) in &rows {
        if v.len() != dim {
            return Err(Error::Dimension { id: id.to_string(), expected: dim, found: v.len() });
        }
        for x in v.iter() {
            bytes.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        ids.push_str(id);
        ids.push('\n');
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let ids_path = ids_path_for(path);
    fs::write(&ids_path, ids).map_err(|e| Error::io(ids_path, e))
}
