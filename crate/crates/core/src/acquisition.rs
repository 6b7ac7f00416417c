//! Acquisition functions and selection strategies.
//!
//! Single-pool methods produce a full [`Ranking`] of the source pool and the
//! top `n` entries are labeled:
//!
//! - uncertainty: `CONF`, `ENTR`, `ENG`, `BALD`, each in an up order (largest
//!   acquisition score first) and a down order;
//! - discriminative (`DAL-T`, `DAL-E`): out-of-fold probabilities of a boosted
//!   tree discriminator trained to pick out target (or target-error) examples;
//! - similarity (`kNN`): cosine to the mean target-train embedding, with
//!   query/context field variants for two-field data;
//! - `RANDOM`: a seeded uniform shuffle.
//!
//! Reverse classification accuracy methods (`RCA`, smoothed `RCA`) instead
//! produce an [`Allocation`] of the budget across source domains, and
//! examples are drawn uniformly inside each domain.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Allocation, Direction, Example, PoolSplit, RankEntry, Ranking, SplitMode};
use crate::encoders::{self, Encoder, FieldVariant, Space};
use crate::error::{Error, Result};
use crate::gbdt::{self, GbdtParams, SampleWeights};
use crate::model::{self, Hyper, Inference, LinearSoftmaxModel, ModelSpec, PredictionProfile, Sample, Target};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Conf,
    Entr,
    Eng,
    Bald,
    DalT,
    DalE,
    Knn,
    Rca,
    RcaSmoothed,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Conf => "conf",
            Method::Entr => "entr",
            Method::Eng => "eng",
            Method::Bald => "bald",
            Method::DalT => "dal-t",
            Method::DalE => "dal-e",
            Method::Knn => "knn",
            Method::Rca => "rca",
            Method::RcaSmoothed => "rca-smoothed",
            Method::Random => "random",
        }
    }

    pub fn is_uncertainty(self) -> bool {
        matches!(self, Method::Conf | Method::Entr | Method::Eng | Method::Bald)
    }
}

/// Ranking order for uncertainty methods. `Up` selects the largest
/// acquisition score first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Up,
    Down,
}

impl Order {
    pub fn direction(self) -> Direction {
        match self {
            Order::Up => Direction::Descending,
            Order::Down => Direction::Ascending,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    SinglePool,
    Budget,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::SinglePool => "single-pool",
            Strategy::Budget => "budget",
        }
    }
}

/// One acquisition variant, e.g. `entr-up`, `dal-e*`, `knn-qc`.
///
/// Keys: `conf|entr|eng|bald` followed by `-up` or `-down`; `dal-t`,
/// `dal-e`, `knn`, `knn-q`, `knn-c`, `knn-qc`, each optionally suffixed with
/// `*` for the task-specific embedding space; `rca`, `rca-smoothed`, `random`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AcquisitionSpec {
    pub method: Method,
    pub order: Option<Order>,
    pub space: Option<SpaceKey>,
    pub fields: Option<FieldKey>,
}

// Orderable mirrors of the encoder enums so specs can key maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpaceKey {
    Agnostic,
    Specific,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldKey {
    Text,
    Q,
    C,
    Qc,
}

impl From<SpaceKey> for Space {
    fn from(s: SpaceKey) -> Space {
        match s {
            SpaceKey::Agnostic => Space::Agnostic,
            SpaceKey::Specific => Space::Specific,
        }
    }
}

impl From<FieldKey> for FieldVariant {
    fn from(f: FieldKey) -> FieldVariant {
        match f {
            FieldKey::Text => FieldVariant::Text,
            FieldKey::Q => FieldVariant::Q,
            FieldKey::C => FieldVariant::C,
            FieldKey::Qc => FieldVariant::Qc,
        }
    }
}

impl AcquisitionSpec {
    pub fn uncertainty(method: Method, order: Order) -> Self {
        AcquisitionSpec { method, order: Some(order), space: None, fields: None }
    }

    pub fn dal(method: Method, space: Space) -> Self {
        AcquisitionSpec { method, order: None, space: Some(space_key(space)), fields: None }
    }

    pub fn knn(fields: FieldVariant, space: Space) -> Self {
        let fields = match fields {
            FieldVariant::Text => FieldKey::Text,
            FieldVariant::Q => FieldKey::Q,
            FieldVariant::C => FieldKey::C,
            FieldVariant::Qc => FieldKey::Qc,
        };
        AcquisitionSpec { method: Method::Knn, order: None, space: Some(space_key(space)), fields: Some(fields) }
    }

    pub fn plain(method: Method) -> Self {
        AcquisitionSpec { method, order: None, space: None, fields: None }
    }

    pub fn strategy(&self) -> Strategy {
        match self.method {
            Method::Rca | Method::RcaSmoothed => Strategy::Budget,
            _ => Strategy::SinglePool,
        }
    }

    pub fn space(&self) -> Option<Space> {
        self.space.map(Space::from)
    }

    pub fn fields(&self) -> Option<FieldVariant> {
        self.fields.map(FieldVariant::from)
    }

    /// DAL and kNN hold out half of the target training sample.
    pub fn split_mode(&self) -> SplitMode {
        match self.method {
            Method::DalT | Method::DalE | Method::Knn => SplitMode::Discriminator,
            _ => SplitMode::Plain,
        }
    }

    pub fn key(&self) -> String {
        self.to_string()
    }

    /// The sixteen classification variants plus `random`.
    pub fn classification_suite() -> Vec<AcquisitionSpec> {
        let mut v = uncertainty_suite();
        v.extend(dal_suite());
        v.push(Self::plain(Method::Rca));
        v.push(Self::plain(Method::RcaSmoothed));
        v.push(Self::knn(FieldVariant::Text, Space::Specific));
        v.push(Self::knn(FieldVariant::Text, Space::Agnostic));
        v.push(Self::plain(Method::Random));
        v
    }

    /// The eighteen variants for query/context data plus `random`.
    pub fn qa_suite() -> Vec<AcquisitionSpec> {
        let mut v = uncertainty_suite();
        v.extend(dal_suite());
        v.push(Self::plain(Method::Rca));
        v.push(Self::plain(Method::RcaSmoothed));
        v.push(Self::knn(FieldVariant::Text, Space::Specific));
        v.push(Self::knn(FieldVariant::C, Space::Agnostic));
        v.push(Self::knn(FieldVariant::Q, Space::Agnostic));
        v.push(Self::knn(FieldVariant::Qc, Space::Agnostic));
        v.push(Self::plain(Method::Random));
        v
    }

    /// Analysis family; up and down uncertainty orders are distinct families.
    pub fn family(&self) -> &'static str {
        match (self.method, self.order) {
            (m, Some(Order::Up)) if m.is_uncertainty() => "uncertainty-up",
            (m, _) if m.is_uncertainty() => "uncertainty-down",
            (Method::DalT | Method::DalE, _) => "h-divergence",
            (Method::Knn, _) => "similarity",
            (Method::Rca | Method::RcaSmoothed, _) => "rca",
            _ => "random",
        }
    }
}

fn space_key(s: Space) -> SpaceKey {
    match s {
        Space::Agnostic => SpaceKey::Agnostic,
        Space::Specific => SpaceKey::Specific,
    }
}

fn uncertainty_suite() -> Vec<AcquisitionSpec> {
    let mut v = Vec::new();
    for m in [Method::Conf, Method::Entr, Method::Eng, Method::Bald] {
        for o in [Order::Up, Order::Down] {
            v.push(AcquisitionSpec::uncertainty(m, o));
        }
    }
    v
}

fn dal_suite() -> Vec<AcquisitionSpec> {
    vec![
        AcquisitionSpec::dal(Method::DalE, Space::Specific),
        AcquisitionSpec::dal(Method::DalT, Space::Specific),
        AcquisitionSpec::dal(Method::DalE, Space::Agnostic),
        AcquisitionSpec::dal(Method::DalT, Space::Agnostic),
    ]
}

impl fmt::Display for AcquisitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.method.name())?;
        if let Some(o) = self.order {
            f.write_str(if o == Order::Up { "-up" } else { "-down" })?;
        }
        match self.fields {
            Some(FieldKey::Q) => f.write_str("-q")?,
            Some(FieldKey::C) => f.write_str("-c")?,
            Some(FieldKey::Qc) => f.write_str("-qc")?,
            _ => {}
        }
        if self.space == Some(SpaceKey::Specific) {
            f.write_str("*")?;
        }
        Ok(())
    }
}

impl FromStr for AcquisitionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("unknown acquisition method {s:?}"));
        let lower = s.trim().to_ascii_lowercase();
        let (body, specific) = match lower.strip_suffix('*') {
            Some(b) => (b, true),
            None => (lower.as_str(), false),
        };
        let space = if specific { Space::Specific } else { Space::Agnostic };
        let spec = match body {
            "rca" | "rca-smoothed" | "random" if specific => return Err(bad()),
            "rca" => Self::plain(Method::Rca),
            "rca-smoothed" => Self::plain(Method::RcaSmoothed),
            "random" => Self::plain(Method::Random),
            "dal-t" => Self::dal(Method::DalT, space),
            "dal-e" => Self::dal(Method::DalE, space),
            "knn" => Self::knn(FieldVariant::Text, space),
            "knn-q" => Self::knn(FieldVariant::Q, space),
            "knn-c" => Self::knn(FieldVariant::C, space),
            "knn-qc" => Self::knn(FieldVariant::Qc, space),
            _ if specific => return Err(bad()),
            other => {
                let (m, o) = other.rsplit_once('-').ok_or_else(bad)?;
                let method = match m {
                    "conf" => Method::Conf,
                    "entr" => Method::Entr,
                    "eng" => Method::Eng,
                    "bald" => Method::Bald,
                    _ => return Err(bad()),
                };
                let order = match o {
                    "up" => Order::Up,
                    "down" => Order::Down,
                    _ => return Err(bad()),
                };
                Self::uncertainty(method, order)
            }
        };
        Ok(spec)
    }
}

impl Serialize for AcquisitionSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for AcquisitionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Uncertainty scores
// ---------------------------------------------------------------------------

/// Negative top-class probability.
pub fn score_conf(profile: &PredictionProfile) -> f64 {
    -profile.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Shannon entropy of the class distribution, in nats.
pub fn score_entropy(profile: &PredictionProfile) -> f64 {
    model::shannon_entropy(&profile.probs)
}

/// Negative log-sum-exp of the logits.
pub fn score_energy(profile: &PredictionProfile) -> Result<f64> {
    if profile.logits.is_empty() {
        return Err(Error::Empty("energy needs logits"));
    }
    Ok(-model::log_sum_exp(&profile.logits))
}

/// Disagreement across stochastic passes: one minus the modal class share.
/// The second value is the mean per-pass entropy, used to order ties.
pub fn score_bald(profile: &PredictionProfile) -> Result<(f64, f64)> {
    let t = profile.passes.len();
    if t == 0 {
        return Err(Error::Empty("BALD needs stochastic passes"));
    }
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &c in &profile.passes {
        *counts.entry(c).or_default() += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    let score = 1.0 - modal as f64 / t as f64;
    let tiebreak = if profile.pass_entropies.is_empty() {
        0.0
    } else {
        profile.pass_entropies.iter().sum::<f64>() / profile.pass_entropies.len() as f64
    };
    Ok((score, tiebreak))
}

fn uncertainty_entry(method: Method, ex: &Example, profile: &PredictionProfile) -> Result<RankEntry> {
    let (score, tiebreak) = match method {
        Method::Conf => (score_conf(profile), 0.0),
        Method::Entr => (score_entropy(profile), 0.0),
        Method::Eng => (score_energy(profile)?, 0.0),
        Method::Bald => score_bald(profile)?,
        other => unreachable!("{other:?} is not an uncertainty method"),
    };
    Ok(RankEntry { id: ex.id.clone(), domain: ex.domain.clone(), score, tiebreak })
}

/// Ranks the source pool by an uncertainty score of the acquisition model.
pub fn rank_uncertainty(
    source: &[Example],
    method: Method,
    order: Order,
    acq_model: &LinearSoftmaxModel,
    mc_passes: usize,
    seed: u64,
) -> Result<Ranking> {
    let mode = if method == Method::Bald {
        Inference::MonteCarlo { passes: mc_passes, seed }
    } else {
        Inference::Deterministic
    };
    let entries = source
        .par_iter()
        .map(|ex| uncertainty_entry(method, ex, &model::predict_profile(acq_model, ex, mode)?))
        .collect::<Result<Vec<_>>>()?;
    Ranking::new(entries, order.direction())
}

// ---------------------------------------------------------------------------
// Discriminative active learning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DalEFallback {
    Error,
    DalT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DalVariant {
    Target,
    Error,
}

pub struct DalInputs<'a> {
    pub split: &'a PoolSplit,
    pub variant: DalVariant,
    pub space: Space,
    /// Acquisition model trained on `split.train`; required for the error
    /// variant and for the specific space.
    pub acq_model: Option<&'a LinearSoftmaxModel>,
    pub params: &'a GbdtParams,
    pub folds: usize,
    pub fallback: DalEFallback,
    pub seed: u64,
}

fn embed_all(examples: &[Example], space: Space, acq_model: Option<&LinearSoftmaxModel>) -> Result<Vec<Vec<f64>>> {
    examples
        .iter()
        .map(|e| match space {
            Space::Agnostic => Ok(e.embedding()?.to_vec()),
            Space::Specific => match (&e.specific_embedding, acq_model) {
                (Some(v), _) => Ok(v.clone()),
                (None, Some(m)) => m.representation(e.embedding()?),
                (None, None) => Err(Error::MissingEmbedding { id: e.id.clone(), space: "specific" }),
            },
        })
        .collect()
}

/// Ranks source examples by out-of-fold discriminator probability,
/// highest first.
pub fn rank_dal(inputs: &DalInputs<'_>) -> Result<Ranking> {
    let split = inputs.split;
    if split.train_b.is_empty() {
        return Err(Error::Empty("DAL needs the held-out target half"));
    }
    let mut variant = inputs.variant;
    let mut target_labels: Vec<bool> = vec![true; split.train_b.len()];
    if variant == DalVariant::Error {
        let m = inputs.acq_model.ok_or_else(|| Error::config("DAL-E needs an acquisition model"))?;
        target_labels = split
            .train_b
            .iter()
            .map(|e| Ok(m.predict(e.embedding()?)? != e.gold()?))
            .collect::<Result<_>>()?;
        if !target_labels.iter().any(|&l| l) {
            match inputs.fallback {
                DalEFallback::Error => return Err(Error::NoErrors),
                DalEFallback::DalT => {
                    log::warn!("DAL-E: acquisition model made no errors, falling back to DAL-T");
                    variant = DalVariant::Target;
                    target_labels.iter_mut().for_each(|l| *l = true);
                }
            }
        }
    }
    let _ = variant;
    let mut features = embed_all(&split.train_b, inputs.space, inputs.acq_model)?;
    features.extend(embed_all(&split.source, inputs.space, inputs.acq_model)?);
    let mut labels = target_labels;
    labels.extend(std::iter::repeat_n(false, split.source.len()));

    let probs = gbdt::cv_predict(&features, &labels, SampleWeights::Balanced, inputs.params, inputs.folds, inputs.seed)?;
    let offset = split.train_b.len();
    let entries = split
        .source
        .iter()
        .zip(&probs[offset..])
        .map(|(e, &p)| RankEntry { id: e.id.clone(), domain: e.domain.clone(), score: p, tiebreak: 0.0 })
        .collect();
    Ranking::new(entries, Direction::Descending)
}

// ---------------------------------------------------------------------------
// Similarity
// ---------------------------------------------------------------------------

/// Ranks source examples by cosine similarity to the mean encoding of the
/// target training sample (both halves), most similar first.
pub fn score_knn(split: &PoolSplit, fields: FieldVariant, encoder: &Encoder) -> Result<Ranking> {
    let train = split.full_train();
    if train.is_empty() {
        return Err(Error::Empty("kNN needs target training examples"));
    }
    let target_vecs = train.iter().map(|e| encoder.encode(e, fields)).collect::<Result<Vec<_>>>()?;
    let center = encoders::mean_of(&target_vecs, train.iter().map(|e| e.id.as_str()))?;
    let mut zero = 0usize;
    let mut entries = Vec::with_capacity(split.source.len());
    for e in &split.source {
        let c = encoders::cosine(&encoder.encode(e, fields)?, &center)?;
        zero += usize::from(c.zero_vector);
        entries.push(RankEntry { id: e.id.clone(), domain: e.domain.clone(), score: c.value, tiebreak: 0.0 });
    }
    if zero > 0 {
        log::warn!("kNN: {zero} zero-vector encodings scored as similarity 0");
    }
    Ranking::new(entries, Direction::Descending)
}

/// Uniformly shuffled source pool.
pub fn rank_random(source: &[Example], seed: u64) -> Result<Ranking> {
    let mut rng = seeds::rng(seeds::derive(seed, &["random"]));
    let mut ids: Vec<&Example> = source.iter().collect();
    ids.sort_by(|a, b| a.id.cmp(&b.id));
    ids.shuffle(&mut rng);
    let n = ids.len() as f64;
    let entries = ids
        .iter()
        .enumerate()
        .map(|(i, e)| RankEntry { id: e.id.clone(), domain: e.domain.clone(), score: (n - i as f64) / n, tiebreak: 0.0 })
        .collect();
    Ranking::new(entries, Direction::Descending)
}

// ---------------------------------------------------------------------------
// Reverse classification accuracy
// ---------------------------------------------------------------------------

/// Normalizer for smoothed RCA shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RcaDenominator {
    /// Shares are `τ_i / Σ_j τ_j`.
    Tau,
    /// Budget is `n τ_i / Σ_j s_j` per domain, capped at `n`; any leftover
    /// goes to the highest-τ domain.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcaOutcome {
    pub allocation: Allocation,
    /// Dev accuracy of each source domain's child model.
    pub domain_scores: BTreeMap<String, f64>,
    /// Dev accuracy of the target-trained model.
    pub target_score: f64,
    /// Relative performance per domain after clamping (smoothed only).
    pub tau: BTreeMap<String, f64>,
}

/// `τ_i = s_i / (s_T - s_i)`; domains with `s_i ≥ s_T` get the largest
/// well-defined τ, or 1 if there is none.
pub fn relative_performance(domain_scores: &BTreeMap<String, f64>, target_score: f64) -> BTreeMap<String, f64> {
    let raw: BTreeMap<&String, Option<f64>> = domain_scores
        .iter()
        .map(|(d, &s)| (d, (target_score - s > 0.0).then(|| s / (target_score - s))))
        .collect();
    let clamp = raw.values().flatten().copied().fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t)))).unwrap_or(1.0);
    raw.into_iter().map(|(d, t)| (d.clone(), t.unwrap_or(clamp))).collect()
}

/// Largest-remainder apportionment of `n` by nonnegative weights. Equal
/// fractional parts favor the earlier key. All-zero weights split evenly.
pub fn apportion(weights: &BTreeMap<String, f64>, n: usize) -> BTreeMap<String, usize> {
    let total: f64 = weights.values().sum();
    let uniform = !(total > 0.0);
    let quotas: Vec<(&String, f64)> = weights
        .iter()
        .map(|(d, &w)| (d, if uniform { n as f64 / weights.len() as f64 } else { n as f64 * w / total }))
        .collect();
    let mut counts: BTreeMap<String, usize> = quotas.iter().map(|(d, q)| ((*d).clone(), q.floor() as usize)).collect();
    let assigned: usize = counts.values().sum();
    let mut order: Vec<(usize, f64)> = quotas.iter().enumerate().map(|(i, (_, q))| (i, q - q.floor())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for &(i, _) in order.iter().take(n.saturating_sub(assigned)) {
        *counts.get_mut(quotas[i].0).unwrap() += 1;
    }
    counts
}

fn priority_by(values: &BTreeMap<String, f64>) -> Vec<String> {
    let mut v: Vec<(&String, f64)> = values.iter().map(|(d, &s)| (d, s)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    v.into_iter().map(|(d, _)| d.clone()).collect()
}

/// Turns domain scores into a budget allocation.
pub fn allocate_from_scores(
    domain_scores: &BTreeMap<String, f64>,
    target_score: f64,
    n: usize,
    smoothed: bool,
    denominator: RcaDenominator,
) -> Result<(Allocation, BTreeMap<String, f64>)> {
    if domain_scores.is_empty() {
        return Err(Error::Empty("no source domain has examples"));
    }
    if !smoothed {
        let priority = priority_by(domain_scores);
        let mut per_domain: BTreeMap<String, usize> = domain_scores.keys().map(|d| (d.clone(), 0)).collect();
        per_domain.insert(priority[0].clone(), n);
        return Ok((Allocation { per_domain, priority, total: n }, BTreeMap::new()));
    }
    let tau = relative_performance(domain_scores, target_score);
    let priority = priority_by(&tau);
    let per_domain = match denominator {
        RcaDenominator::Tau => apportion(&tau, n),
        RcaDenominator::Paper => {
            let s_sum: f64 = domain_scores.values().sum();
            let raw: BTreeMap<String, f64> = tau
                .iter()
                .map(|(d, t)| (d.clone(), if s_sum > 0.0 { n as f64 * t / s_sum } else { 0.0 }))
                .collect();
            if raw.values().sum::<f64>() >= n as f64 {
                apportion(&tau, n)
            } else {
                let mut counts: BTreeMap<String, usize> = raw.iter().map(|(d, r)| (d.clone(), r.floor() as usize)).collect();
                let left = n - counts.values().sum::<usize>();
                *counts.get_mut(&priority[0]).unwrap() += left;
                counts
            }
        }
    };
    Ok((Allocation { per_domain, priority, total: n }, tau))
}

pub struct RcaInputs<'a> {
    pub split: &'a PoolSplit,
    /// Acquisition model trained on the target training sample.
    pub acq_model: &'a LinearSoftmaxModel,
    pub spec: &'a ModelSpec,
    pub hyper: &'a Hyper,
    pub n: usize,
    pub smoothed: bool,
    pub denominator: RcaDenominator,
}

/// Scores each source domain by the target-dev accuracy of a child model
/// trained on the domain's soft pseudo-labels, then allocates the budget.
pub fn allocate_rca(inputs: &RcaInputs<'_>) -> Result<RcaOutcome> {
    let split = inputs.split;
    if split.dev.is_empty() {
        return Err(Error::Empty("RCA needs target dev examples"));
    }
    let target_score = model::evaluate_accuracy(inputs.acq_model, &split.dev)?;
    let mut by_domain: BTreeMap<String, Vec<&Example>> = BTreeMap::new();
    for e in &split.source {
        by_domain.entry(e.domain.clone()).or_default().push(e);
    }
    let scored: Vec<Result<(String, f64)>> = by_domain
        .par_iter()
        .map(|(domain, exs)| {
            let samples = exs
                .iter()
                .map(|e| {
                    let x = e.embedding()?;
                    Ok(Sample { id: &e.id, x, target: Target::Soft(inputs.acq_model.predict_proba(x)?) })
                })
                .collect::<Result<Vec<_>>>()?;
            let hyper = Hyper { seed: seeds::derive(inputs.hyper.seed, &["rca-child", domain]), ..*inputs.hyper };
            let child = model::train_samples(samples, &split.dev, inputs.spec, &hyper)?;
            Ok((domain.clone(), model::evaluate_accuracy(&child, &split.dev)?))
        })
        .collect();
    let domain_scores = scored.into_iter().collect::<Result<BTreeMap<_, _>>>()?;
    let (allocation, tau) = allocate_from_scores(&domain_scores, target_score, inputs.n, inputs.smoothed, inputs.denominator)?;
    Ok(RcaOutcome { allocation, domain_scores, target_score, tau })
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

/// What an acquisition method hands to the selection step.
#[derive(Debug, Clone, PartialEq)]
pub enum Choice {
    Ranking(Ranking),
    Allocation(Allocation),
}

impl Choice {
    /// A ranking view of the choice for correlation analysis. Allocations
    /// score every source example by its domain's budget share.
    pub fn ranking_view(&self, source: &[Example]) -> Result<Ranking> {
        match self {
            Choice::Ranking(r) => Ok(r.clone()),
            Choice::Allocation(a) => {
                let total = a.total.max(1) as f64;
                let entries = source
                    .iter()
                    .map(|e| RankEntry {
                        id: e.id.clone(),
                        domain: e.domain.clone(),
                        score: a.count(&e.domain) as f64 / total,
                        tiebreak: 0.0,
                    })
                    .collect();
                Ranking::new(entries, Direction::Descending)
            }
        }
    }
}

/// Picks `n` source ids: the ranking's top `n`, or per-domain uniform draws
/// for an allocation with shortfalls spilling down the priority order.
pub fn select(choice: &Choice, split: &PoolSplit, n: usize, seed: u64) -> Result<Vec<String>> {
    if n > split.source.len() {
        return Err(Error::BudgetExceedsPool { n, available: split.source.len() });
    }
    match choice {
        Choice::Ranking(r) => Ok(r.top(n)),
        Choice::Allocation(a) => Ok(draw_allocation(a, &split.source, n, seed)),
    }
}

fn draw_allocation(a: &Allocation, source: &[Example], n: usize, seed: u64) -> Vec<String> {
    let mut pools: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in source {
        pools.entry(e.domain.as_str()).or_default().push(e.id.as_str());
    }
    for (domain, ids) in pools.iter_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut seeds::rng(seeds::derive(seed, &["allocation", domain])));
    }
    let mut order: Vec<&str> = a.priority.iter().map(String::as_str).filter(|d| pools.contains_key(d)).collect();
    for d in pools.keys() {
        if !order.contains(d) {
            order.push(d);
        }
    }
    let mut taken: BTreeMap<&str, usize> = BTreeMap::new();
    let mut deficit = 0;
    let mut remaining = n;
    for &d in &order {
        let want = a.count(d).min(remaining);
        let got = want.min(pools[d].len());
        taken.insert(d, got);
        deficit += want - got;
        remaining -= want;
    }
    deficit += remaining;
    for &d in &order {
        if deficit == 0 {
            break;
        }
        let t = taken.get_mut(d).unwrap();
        let extra = (pools[d].len() - *t).min(deficit);
        *t += extra;
        deficit -= extra;
    }
    order.iter().flat_map(|d| pools[d][..taken[d]].iter().map(|s| s.to_string())).collect()
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub dropout_rate: f64,
    /// Training hyper-parameters of the acquisition model.
    pub hyper: Hyper,
    pub mc_passes: usize,
    pub gbdt: GbdtParams,
    pub folds: usize,
    /// Hashed encoder used for query/context similarity variants.
    pub text_dim: usize,
    pub text_seed: u64,
    pub rca_denominator: RcaDenominator,
    pub dal_e_fallback: DalEFallback,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            dropout_rate: model::DEFAULT_DROPOUT,
            hyper: Hyper::default(),
            mc_passes: 20,
            gbdt: GbdtParams::paper(),
            folds: 5,
            text_dim: 256,
            text_seed: 0,
            rca_denominator: RcaDenominator::Tau,
            dal_e_fallback: DalEFallback::Error,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Acquired {
    pub choice: Choice,
    /// Ranking view of `choice` over the whole source pool.
    pub ranking: Ranking,
    pub rca: Option<RcaOutcome>,
}

impl AcquisitionSpec {
    fn needs_model(&self) -> bool {
        self.method.is_uncertainty()
            || matches!(self.method, Method::DalE | Method::Rca | Method::RcaSmoothed)
            || self.space() == Some(Space::Specific)
    }
}

/// Runs one acquisition method on a split: trains the acquisition model on
/// `split.train` when the method needs one, then ranks or allocates.
///
/// `n` is only consulted by budget methods.
pub fn acquire(split: &PoolSplit, spec: &AcquisitionSpec, classes: usize, cfg: &AcquisitionConfig, n: usize, seed: u64) -> Result<Acquired> {
    let model_spec = ModelSpec { classes, dropout_rate: cfg.dropout_rate };
    let acq_model = if spec.needs_model() {
        let hyper = Hyper { seed: seeds::derive(cfg.hyper.seed, &["acq-model", &split.seed.to_string()]), ..cfg.hyper };
        Some(Arc::new(model::train(&split.train, &split.dev, &model_spec, &hyper)?))
    } else {
        None
    };
    let mut rca = None;
    let choice = match spec.method {
        m if m.is_uncertainty() => Choice::Ranking(rank_uncertainty(
            &split.source,
            m,
            spec.order.unwrap_or(Order::Up),
            acq_model.as_deref().unwrap(),
            cfg.mc_passes,
            seed,
        )?),
        Method::DalT | Method::DalE => Choice::Ranking(rank_dal(&DalInputs {
            split,
            variant: if spec.method == Method::DalE { DalVariant::Error } else { DalVariant::Target },
            space: spec.space().unwrap_or(Space::Agnostic),
            acq_model: acq_model.as_deref(),
            params: &cfg.gbdt,
            folds: cfg.folds,
            fallback: cfg.dal_e_fallback,
            seed,
        })?),
        Method::Knn => {
            let fields = spec.fields().unwrap_or(FieldVariant::Text);
            let encoder = match (spec.space().unwrap_or(Space::Agnostic), fields) {
                (Space::Specific, _) => Encoder::TaskSpecific(acq_model.clone().unwrap()),
                (Space::Agnostic, FieldVariant::Text) => Encoder::Precomputed(Space::Agnostic),
                (Space::Agnostic, _) => Encoder::HashedBag { dim: cfg.text_dim, seed: cfg.text_seed },
            };
            Choice::Ranking(score_knn(split, fields, &encoder)?)
        }
        Method::Rca | Method::RcaSmoothed => {
            let out = allocate_rca(&RcaInputs {
                split,
                acq_model: acq_model.as_deref().unwrap(),
                spec: &model_spec,
                hyper: &Hyper { seed: seeds::derive(cfg.hyper.seed, &["rca", &split.seed.to_string()]), ..cfg.hyper },
                n,
                smoothed: spec.method == Method::RcaSmoothed,
                denominator: cfg.rca_denominator,
            })?;
            let choice = Choice::Allocation(out.allocation.clone());
            rca = Some(out);
            choice
        }
        Method::Random => Choice::Ranking(rank_random(&split.source, seed)?),
        _ => unreachable!(),
    };
    let ranking = choice.ranking_view(&split.source)?;
    Ok(Acquired { choice, ranking, rca })
}
