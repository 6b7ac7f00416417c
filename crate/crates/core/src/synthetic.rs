//! Multi-domain Gaussian pool generator.
//!
//! Every domain shares a fixed anchor (a random direction of length
//! `anchor_norm`) and the same class means (vertices of a centered simplex
//! scaled by `separation`), then adds its own offset `shift · u_domain` for a
//! random unit direction orthogonal to the anchor. Points get unit-variance
//! Gaussian noise and each label is replaced by a uniformly drawn other class
//! with the domain's flip probability.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Example, Pool, FIELD_CONTEXT, FIELD_QUERY, FIELD_TEXT};
use crate::error::{Error, Result};
use crate::metrics::random_direction;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub name: String,
    /// Distance of the domain's offset from the shared anchor.
    #[serde(default)]
    pub shift: f64,
    /// Probability of replacing a label with another class.
    #[serde(default)]
    pub flip: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub domains: Vec<DomainConfig>,
    pub classes: usize,
    pub dim: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_anchor_norm")]
    pub anchor_norm: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_separation() -> f64 {
    3.0
}

fn default_anchor_norm() -> f64 {
    1.0
}

impl SyntheticConfig {
    /// `k` domains of `size` examples with the given per-domain shifts.
    pub fn uniform(k: usize, size: usize, classes: usize, dim: usize, seed: u64) -> Self {
        SyntheticConfig {
            domains: (0..k).map(|i| DomainConfig { name: format!("d{i}"), shift: 0.0, flip: 0.0, size }).collect(),
            classes,
            dim,
            separation: default_separation(),
            anchor_norm: default_anchor_norm(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.len() < 2 {
            return Err(Error::config("synthetic pool needs at least two domains"));
        }
        if self.classes < 2 {
            return Err(Error::config("synthetic pool needs at least two classes"));
        }
        if self.dim < self.classes {
            return Err(Error::config(format!("dim {} must be at least the class count {}", self.dim, self.classes)));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::config("separation must be finite and non-negative"));
        }
        if !(self.anchor_norm.is_finite() && self.anchor_norm > 0.0) {
            return Err(Error::config("anchor_norm must be positive"));
        }
        let mut names: Vec<&str> = self.domains.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("duplicate synthetic domain name"));
        }
        for d in &self.domains {
            if d.name.is_empty() || d.name.contains(char::is_whitespace) {
                return Err(Error::config(format!("invalid domain name {:?}", d.name)));
            }
            if !(d.shift.is_finite() && d.shift >= 0.0) {
                return Err(Error::config(format!("domain {}: shift must be >= 0", d.name)));
            }
            if !(0.0..1.0).contains(&d.flip) {
                return Err(Error::config(format!("domain {}: flip must lie in [0, 1)", d.name)));
            }
            if d.size == 0 {
                return Err(Error::config(format!("domain {}: size must be positive", d.name)));
            }
        }
        Ok(())
    }
}

/// Class mean `c` before the domain offset: `separation · (e_c − 1/K)`.
fn class_mean(c: usize, classes: usize, dim: usize, separation: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for (i, x) in v.iter_mut().enumerate().take(classes) {
        *x = separation * (f64::from(u8::from(i == c)) - 1.0 / classes as f64);
    }
    v
}

// Unit vector orthogonal to the unit vector `to`; needs dim >= 2.
fn orthogonal_direction(to: &[f64], seed: u64) -> Vec<f64> {
    let mut k = 0;
    loop {
        let mut v = random_direction(to.len(), seeds::derive_index(seed, "orthogonal", k));
        let dot: f64 = v.iter().zip(to).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(to).for_each(|(x, t)| *x -= dot * t);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
        k += 1;
    }
}

pub fn gen_synthetic(config: &SyntheticConfig) -> Result<Pool> {
    config.validate()?;
    let (k, d) = (config.classes, config.dim);
    let unit_anchor = random_direction(d, seeds::derive(config.seed, &["anchor"]));
    let anchor: Vec<f64> = unit_anchor.iter().map(|a| a * config.anchor_norm).collect();
    let means: Vec<Vec<f64>> = (0..k).map(|c| class_mean(c, k, d, config.separation)).collect();
    let mut examples = Vec::new();
    for dom in &config.domains {
        let dir = orthogonal_direction(&unit_anchor, seeds::derive(config.seed, &["offset", &dom.name]));
        let mut rng = seeds::rng(seeds::derive(config.seed, &["domain", &dom.name]));
        for idx in 0..dom.size {
            let class = rng.random_range(0..k);
            let x: Vec<f64> = (0..d)
                .map(|i| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    anchor[i] + means[class][i] + dom.shift * dir[i] + noise
                })
                .collect();
            let label = if rng.random::<f64>() < dom.flip {
                let other = rng.random_range(0..k - 1);
                if other >= class { other + 1 } else { other }
            } else {
                class
            };
            let query = format!("d{} c{}", dom.name, class);
            let context = format!("t{idx} w{}", rng.random_range(0..64u32));
            examples.push(
                Example::new(format!("{}-{idx:06}", dom.name), dom.name.clone())
                    .with_label(label)
                    .with_field(FIELD_TEXT, format!("{query} {context}"))
                    .with_field(FIELD_QUERY, query)
                    .with_field(FIELD_CONTEXT, context)
                    .with_embedding(x),
            );
        }
    }
    Pool::new(examples, k)
}
