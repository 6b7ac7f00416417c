//! Ranking correlation and domain distance analytics.
//!
//! Kendall's tau here counts tied pairs (in either score) as half concordant
//! and half discordant, which makes `n_c + n_d` always equal `C(n, 2)`.
//! Distances are first-order Wasserstein (W1); multi-dimensional samples use
//! the sliced estimator over random unit directions.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Direction, Pool, RankEntry};
use crate::error::{Error, Result};
use crate::seeds;

pub const DEFAULT_PROJECTIONS: usize = 256;

/// Kendall's tau between paired score vectors.
///
/// O(n log n): sort by `(x, y)`, count tied groups, then count strict
/// inversions of `y` with a merge sort.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension { id: "<kendall>".into(), expected: x.len(), found: y.len() });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Empty("kendall tau needs at least two pairs"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::config("kendall tau scores must be finite"));
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let pairs_in = |len: u64| len * len.saturating_sub(1) / 2;
    let (mut tied_x, mut tied_xy) = (0u64, 0u64);
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in pairs.windows(2) {
        if w[0].0 == w[1].0 {
            run_x += 1;
            if w[0].1 == w[1].1 {
                run_xy += 1;
            } else {
                tied_xy += pairs_in(run_xy);
                run_xy = 1;
            }
        } else {
            tied_x += pairs_in(run_x);
            tied_xy += pairs_in(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tied_x += pairs_in(run_x);
    tied_xy += pairs_in(run_xy);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut buf);

    let mut tied_y = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            tied_y += pairs_in(run_y);
            run_y = 1;
        }
    }
    tied_y += pairs_in(run_y);

    let total = pairs_in(n as u64);
    let ties = tied_x + tied_y - tied_xy;
    let concordant = total - ties - discordant;
    Ok((concordant as f64 - discordant as f64) / total as f64)
}

// Sorts `v` ascending and returns the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            count += (mid - i) as u64;
            buf[k] = v[j];
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

/// Score oriented so that larger means selected earlier.
pub fn priority(entry: &RankEntry, direction: Direction) -> f64 {
    match direction {
        Direction::Descending => entry.score,
        Direction::Ascending => -entry.score,
    }
}

/// Tau between two rankings over their shared ids, comparing selection
/// priorities. `None` when fewer than two ids are shared.
pub fn ranking_tau(a: &[RankEntry], a_dir: Direction, b: &[RankEntry], b_dir: Direction) -> Result<Option<f64>> {
    let lookup: BTreeMap<&str, f64> = b.iter().map(|e| (e.id.as_str(), priority(e, b_dir))).collect();
    let (x, y): (Vec<f64>, Vec<f64>) =
        a.iter().filter_map(|e| lookup.get(e.id.as_str()).map(|&v| (priority(e, a_dir), v))).unzip();
    if x.len() < 2 {
        return Ok(None);
    }
    kendall_tau(&x, &y).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauMatrix {
    pub methods: Vec<String>,
    /// Mean tau over targets; `NaN` where no target had both methods.
    pub values: Vec<Vec<f64>>,
    pub per_target: BTreeMap<String, Vec<Vec<f64>>>,
}

/// One ranking of a method on a target.
#[derive(Debug, Clone)]
pub struct RankingRecord {
    pub entries: Vec<RankEntry>,
    pub direction: Direction,
}

impl TauMatrix {
    /// Builds per-target matrices and their mean. `rankings` maps
    /// target → method → ranking.
    pub fn from_rankings(methods: &[String], rankings: &BTreeMap<String, BTreeMap<String, RankingRecord>>) -> Result<Self> {
        let m = methods.len();
        let mut per_target = BTreeMap::new();
        let mut sum = vec![vec![0.0; m]; m];
        let mut count = vec![vec![0usize; m]; m];
        for (target, by_method) in rankings {
            let mut mat = vec![vec![f64::NAN; m]; m];
            for i in 0..m {
                let Some(a) = by_method.get(&methods[i]) else { continue };
                mat[i][i] = 1.0;
                for j in (i + 1)..m {
                    let Some(b) = by_method.get(&methods[j]) else { continue };
                    if let Some(t) = ranking_tau(&a.entries, a.direction, &b.entries, b.direction)? {
                        mat[i][j] = t;
                        mat[j][i] = t;
                    }
                }
            }
            for i in 0..m {
                for j in 0..m {
                    if mat[i][j].is_finite() {
                        sum[i][j] += mat[i][j];
                        count[i][j] += 1;
                    }
                }
            }
            per_target.insert(target.clone(), mat);
        }
        let values = (0..m)
            .map(|i| (0..m).map(|j| if count[i][j] > 0 { sum[i][j] / count[i][j] as f64 } else { f64::NAN }).collect())
            .collect();
        Ok(TauMatrix { methods: methods.to_vec(), values, per_target })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_matrix(w, "method", &self.methods, &self.values)
    }
}

/// Intra-family range `[lo, hi]` for each family: extremes of tau over
/// distinct member pairs.
fn family_ranges(methods: &[String], values: &[Vec<f64>], families: &BTreeMap<String, String>) -> BTreeMap<String, Result<(f64, f64)>> {
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, m) in methods.iter().enumerate() {
        if let Some(f) = families.get(m) {
            members.entry(f.as_str()).or_default().push(i);
        }
    }
    members
        .into_iter()
        .map(|(f, idx)| {
            let range = if idx.len() < 2 {
                Err(Error::FamilyTooSmall(f.to_string()))
            } else {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &i in &idx {
                    for &j in &idx {
                        if i != j && values[i][j].is_finite() {
                            lo = lo.min(values[i][j]);
                            hi = hi.max(values[i][j]);
                        }
                    }
                }
                if hi > lo {
                    Ok((lo, hi))
                } else {
                    Err(Error::UndefinedRange(f.to_string()))
                }
            };
            (f.to_string(), range)
        })
        .collect()
}

/// Rescales each row by its method's intra-family range:
/// `(τ - lo) / (hi - lo)`. Rows whose family has no usable range are `None`.
pub fn normalize_rows(matrix: &TauMatrix, families: &BTreeMap<String, String>) -> Vec<Option<Vec<f64>>> {
    let ranges = family_ranges(&matrix.methods, &matrix.values, families);
    matrix
        .methods
        .iter()
        .zip(&matrix.values)
        .map(|(m, row)| {
            let (lo, hi) = *families.get(m).and_then(|f| ranges.get(f)).and_then(|r| r.as_ref().ok())?;
            Some(row.iter().map(|t| (t - lo) / (hi - lo)).collect())
        })
        .collect()
}

/// Strict form of [`normalize_rows`]: fails if any row's family is a
/// singleton, unmapped, or has a zero-width range.
pub fn normalize_intra_family(matrix: &TauMatrix, families: &BTreeMap<String, String>) -> Result<Vec<Vec<f64>>> {
    let ranges = family_ranges(&matrix.methods, &matrix.values, families);
    let mut out = Vec::with_capacity(matrix.methods.len());
    for (m, row) in matrix.methods.iter().zip(&matrix.values) {
        let f = families.get(m).ok_or_else(|| Error::config(format!("method {m} has no family")))?;
        let (lo, hi) = match &ranges[f] {
            Ok(r) => *r,
            Err(Error::FamilyTooSmall(f)) => return Err(Error::FamilyTooSmall(f.clone())),
            Err(_) => return Err(Error::UndefinedRange(f.clone())),
        };
        out.push(row.iter().map(|t| (t - lo) / (hi - lo)).collect());
    }
    Ok(out)
}

pub fn write_matrix<W: Write>(w: W, corner: &str, names: &[String], values: &[Vec<f64>]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header = vec![corner.to_string()];
    header.extend(names.iter().cloned());
    csv.write_record(&header)?;
    for (name, row) in names.iter().zip(values) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| fmt_cell(*v)));
        csv.write_record(&rec)?;
    }
    csv.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_optional_rows<W: Write>(w: W, corner: &str, names: &[String], rows: &[Option<Vec<f64>>]) -> Result<()> {
    let blank = vec![f64::NAN; names.len()];
    let values: Vec<Vec<f64>> = rows.iter().map(|r| r.clone().unwrap_or_else(|| blank.clone())).collect();
    write_matrix(w, corner, names, &values)
}

fn fmt_cell(v: f64) -> String {
    if v.is_finite() { format!("{v:.6}") } else { String::new() }
}

// ---------------------------------------------------------------------------
// Wasserstein
// ---------------------------------------------------------------------------

/// First-order Wasserstein distance between equal-size 1-D samples: the mean
/// absolute difference of matching order statistics. Inputs need not be
/// sorted.
pub fn wasserstein_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension { id: "<wasserstein>".into(), expected: xs.len(), found: ys.len() });
    }
    if xs.is_empty() {
        return Err(Error::Empty("wasserstein of empty samples"));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

/// Uniformly random unit vector in `dim` dimensions.
pub fn random_direction(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn project(points: &[Vec<f64>], dir: &[f64]) -> Vec<f64> {
    points.iter().map(|p| p.iter().zip(dir).map(|(a, b)| a * b).sum()).collect()
}

/// Sliced W1: the mean over `projections` random unit directions of the 1-D
/// distance between projected samples. Direction `p` is seeded by
/// `derive_index(seed, "projection", p)`.
pub fn sliced_wasserstein(xs: &[Vec<f64>], ys: &[Vec<f64>], projections: usize, seed: u64) -> Result<f64> {
    if projections == 0 {
        return Err(Error::config("sliced wasserstein needs at least one projection"));
    }
    if xs.len() != ys.len() {
        return Err(Error::Dimension { id: "<sliced wasserstein>".into(), expected: xs.len(), found: ys.len() });
    }
    let dim = xs.first().ok_or(Error::Empty("wasserstein of empty samples"))?.len();
    for (i, p) in xs.iter().chain(ys).enumerate() {
        if p.len() != dim {
            return Err(Error::Dimension { id: format!("<point {i}>"), expected: dim, found: p.len() });
        }
    }
    let per: Vec<f64> = (0..projections)
        .into_par_iter()
        .map(|p| {
            let dir = random_direction(dim, seeds::derive_index(seed, "projection", p));
            wasserstein_1d(&project(xs, &dir), &project(ys, &dir))
        })
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / projections as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population variance; 0 for a single domain.
    pub variance: f64,
    /// False when fewer than two domains contributed.
    pub variance_defined: bool,
}

pub fn aggregate_domain_distances(distances: &BTreeMap<String, f64>) -> Result<DistanceSummary> {
    if distances.is_empty() {
        return Err(Error::Empty("no domain distances to aggregate"));
    }
    let n = distances.len() as f64;
    let mean = distances.values().sum::<f64>() / n;
    let min = distances.values().copied().fold(f64::INFINITY, f64::min);
    let max = distances.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let variance = distances.values().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok(DistanceSummary { mean, min, max, variance, variance_defined: distances.len() >= 2 })
}

/// Sliced W1 between random equal-size samples of the target domain and
/// each other domain's stored embeddings. Samples are capped at
/// `sample_size` and at the smaller domain's size.
pub fn domain_distances(pool: &Pool, target: &str, sample_size: usize, projections: usize, seed: u64) -> Result<BTreeMap<String, f64>> {
    let sample = |domain: &str, k: usize| -> Result<Vec<Vec<f64>>> {
        let mut exs: Vec<_> = pool.domain_examples(domain).collect();
        exs.sort_by(|a, b| a.id.cmp(&b.id));
        exs.shuffle(&mut seeds::rng(seeds::derive(seed, &["distance-sample", domain])));
        exs.iter().take(k).map(|e| e.embedding().map(<[f64]>::to_vec)).collect()
    };
    let domains = pool.domains();
    if !domains.iter().any(|d| d == target) {
        return Err(Error::UnknownDomain(target.to_string()));
    }
    let target_len = pool.domain_examples(target).count();
    let mut out = BTreeMap::new();
    for d in domains.iter().filter(|d| *d != target) {
        let k = sample_size.min(target_len).min(pool.domain_examples(d).count());
        let xs = sample(target, k)?;
        let ys = sample(d, k)?;
        out.insert(d.clone(), sliced_wasserstein(&xs, &ys, projections, seeds::derive(seed, &["distance", target, d]))?);
    }
    Ok(out)
}

/// Area under the ROC curve via the rank-sum statistic; tied scores count
/// one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension { id: "<auc>".into(), expected: scores.len(), found: labels.len() });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * mid_rank;
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_tau(x: &[f64], y: &[f64]) -> f64 {
        let (mut c, mut d) = (0.0, 0.0);
        for i in 0..x.len() {
            for j in (i + 1)..x.len() {
                let s = (x[j] - x[i]) * (y[j] - y[i]);
                if s > 0.0 {
                    c += 1.0;
                } else if s < 0.0 {
                    d += 1.0;
                } else {
                    c += 0.5;
                    d += 0.5;
                }
            }
        }
        (c - d) / (c + d)
    }

    #[test]
    fn tau_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!((kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert_eq!(kendall_tau(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_1d(&[0.0, 0.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[1.0, 5.0], &[5.0, 1.0]).unwrap(), 0.0);
        assert!(wasserstein_1d(&[1.0], &[1.0, 2.0]).is_err());
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<Vec<f64>> = x.iter().map(|p| vec![p[0] - 2.5]).collect();
        assert!((sliced_wasserstein(&x, &y, 16, 1).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(sliced_wasserstein(&x, &x, 16, 1).unwrap(), 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let m = |v: &[(&str, f64)]| v.iter().map(|(k, x)| (k.to_string(), *x)).collect::<BTreeMap<_, _>>();
        let s = aggregate_domain_distances(&m(&[("A", 2.0)])).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.variance, s.variance_defined), (2.0, 2.0, 2.0, 0.0, false));
        let s = aggregate_domain_distances(&m(&[("A", 1.0), ("B", 3.0)])).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.variance), (2.0, 1.0, 3.0, 1.0));
        assert!(aggregate_domain_distances(&BTreeMap::new()).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
    }

    fn matrix(methods: &[&str], values: Vec<Vec<f64>>) -> TauMatrix {
        TauMatrix { methods: methods.iter().map(|s| s.to_string()).collect(), values, per_target: BTreeMap::new() }
    }

    #[test]
    fn normalization_endpoints() {
        let t = matrix(
            &["a", "b", "c", "r"],
            vec![
                vec![1.0, 0.2, 0.6, -0.4],
                vec![0.2, 1.0, 0.8, 0.9],
                vec![0.6, 0.8, 1.0, 0.0],
                vec![-0.4, 0.9, 0.0, 1.0],
            ],
        );
        let fam: BTreeMap<String, String> =
            [("a", "f"), ("b", "f"), ("c", "f"), ("r", "random")].iter().map(|(m, f)| (m.to_string(), f.to_string())).collect();
        let rows = normalize_rows(&t, &fam);
        let a = rows[0].as_ref().unwrap();
        assert!((a[1] - 0.0).abs() < 1e-12);
        assert!((rows[1].as_ref().unwrap()[2] - 1.0).abs() < 1e-12);
        assert!(a[3] < 0.0);
        assert!(rows[3].is_none());
        assert!(matches!(normalize_intra_family(&t, &fam), Err(Error::FamilyTooSmall(_))));
    }

    proptest! {
        #[test]
        fn tau_matches_brute_force(pairs in prop::collection::vec((0u8..6, 0u8..6), 2..80)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            prop_assert_eq!(kendall_tau(&x, &y).unwrap(), brute_tau(&x, &y));
        }

        #[test]
        fn tau_symmetric_and_monotone_invariant(pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..60)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let t = kendall_tau(&x, &y).unwrap();
            prop_assert_eq!(t, kendall_tau(&y, &x).unwrap());
            let xt: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(t, kendall_tau(&xt, &y).unwrap());
        }

        #[test]
        fn w1_translation_and_triangle(
            a in prop::collection::vec(-10.0f64..10.0, 1..30),
            c in -5.0f64..5.0,
            seed in 0u64..1000,
        ) {
            let shifted: Vec<f64> = a.iter().map(|v| v + c).collect();
            prop_assert!((wasserstein_1d(&a, &shifted).unwrap() - c.abs()).abs() < 1e-9);
            let mut rng = seeds::rng(seed);
            let b: Vec<f64> = a.iter().map(|_| rand::Rng::random_range(&mut rng, -10.0..10.0)).collect();
            let d: Vec<f64> = a.iter().map(|_| rand::Rng::random_range(&mut rng, -10.0..10.0)).collect();
            let ab = wasserstein_1d(&a, &b).unwrap();
            let bd = wasserstein_1d(&b, &d).unwrap();
            let ad = wasserstein_1d(&a, &d).unwrap();
            prop_assert!(ad <= ab + bd + 1e-9);
        }

        #[test]
        fn sliced_symmetric(seed in 0u64..500) {
            let mut rng = seeds::rng(seed);
            let mut pts = |k: usize| -> Vec<Vec<f64>> {
                (0..k).map(|_| (0..3).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()).collect()
            };
            let x = pts(12);
            let y = pts(12);
            prop_assert_eq!(sliced_wasserstein(&x, &y, 8, seed).unwrap(), sliced_wasserstein(&y, &x, 8, seed).unwrap());
        }
    }
}
