//! Embedding provision: a deterministic hashed bag-of-words encoder,
//! passthrough of stored vectors, the task-specific representation of a
//! trained model, and the mean/cosine primitives used by similarity ranking.
//!
//! Stored embeddings are used as-is (no L2 normalization); cosine is scale
//! invariant so similarity ranking does not depend on it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{Example, FIELD_CONTEXT, FIELD_QUERY, FIELD_TEXT};
use crate::error::{Error, Result};
use crate::model::LinearSoftmaxModel;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Agnostic,
    Specific,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Agnostic => "agnostic",
            Space::Specific => "specific",
        }
    }
}

/// Which text fields an encoder reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldVariant {
    Text,
    Q,
    C,
    Qc,
}

impl FieldVariant {
    pub fn name(self) -> &'static str {
        match self {
            FieldVariant::Text => "text",
            FieldVariant::Q => "q",
            FieldVariant::C => "c",
            FieldVariant::Qc => "qc",
        }
    }

    /// The text this variant encodes; QC joins query and context with a space.
    pub fn text_of(self, ex: &Example) -> Result<String> {
        Ok(match self {
            FieldVariant::Text => ex.field(FIELD_TEXT)?.to_string(),
            FieldVariant::Q => ex.field(FIELD_QUERY)?.to_string(),
            FieldVariant::C => ex.field(FIELD_CONTEXT)?.to_string(),
            FieldVariant::Qc => format!("{} {}", ex.field(FIELD_QUERY)?, ex.field(FIELD_CONTEXT)?),
        })
    }
}

/// Signed feature hashing of whitespace tokens, L2-normalized.
///
/// Empty (or all-whitespace) text maps to the zero vector.
pub fn hash_encode(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 1, "hash_encode needs dim >= 1");
    let mut v = vec![0.0; dim];
    let prefix = seed.to_le_bytes();
    for tok in text.split_whitespace() {
        let mut bytes = Vec::with_capacity(8 + tok.len());
        bytes.extend_from_slice(&prefix);
        bytes.extend_from_slice(tok.as_bytes());
        let h = seeds::splitmix64(seeds::fnv1a(&bytes));
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn embedding_in(ex: &Example, space: Space) -> Result<&[f64]> {
    let v = match space {
        Space::Agnostic => ex.agnostic_embedding.as_deref(),
        Space::Specific => ex.specific_embedding.as_deref(),
    };
    v.ok_or_else(|| Error::MissingEmbedding { id: ex.id.clone(), space: space.name() })
}

/// Arithmetic mean of the stored embeddings in `space`.
pub fn mean_embedding(examples: &[Example], space: Space) -> Result<Vec<f64>> {
    let vectors = examples.iter().map(|e| embedding_in(e, space)).collect::<Result<Vec<_>>>()?;
    mean_of(&vectors, examples.iter().map(|e| e.id.as_str()))
}

pub(crate) fn mean_of<'a, V: AsRef<[f64]>>(vectors: &[V], ids: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::Empty("mean of an empty set"))?;
    let dim = first.as_ref().len();
    let mut acc = vec![0.0; dim];
    for (v, id) in vectors.iter().zip(ids) {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::Dimension { id: id.to_string(), expected: dim, found: v.len() });
        }
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Set when either input was the zero vector; `value` is then 0.
    pub zero_vector: bool,
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<Cosine> {
    if u.len() != v.len() {
        return Err(Error::Dimension { id: "<cosine>".into(), expected: u.len(), found: v.len() });
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok(Cosine { value: 0.0, zero_vector: true });
    }
    Ok(Cosine { value: (dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0), zero_vector: false })
}

/// Produces a vector for an example.
#[derive(Debug, Clone)]
pub enum Encoder {
    /// [`hash_encode`] over the requested fields.
    HashedBag { dim: usize, seed: u64 },
    /// The stored embedding in the given space. Only the whole-example
    /// variant is available.
    Precomputed(Space),
    /// The model's logit vector over the example's agnostic embedding.
    TaskSpecific(Arc<LinearSoftmaxModel>),
}

impl Encoder {
    pub fn encode(&self, ex: &Example, fields: FieldVariant) -> Result<Vec<f64>> {
        match self {
            Encoder::HashedBag { dim, seed } => Ok(hash_encode(&fields.text_of(ex)?, *dim, *seed)),
            Encoder::Precomputed(space) => {
                if fields != FieldVariant::Text {
                    fields.text_of(ex)?;
                    return Err(Error::config(format!(
                        "field variant {} needs a text encoder, stored embeddings cover whole examples",
                        fields.name()
                    )));
                }
                Ok(embedding_in(ex, *space)?.to_vec())
            }
            Encoder::TaskSpecific(model) => model.representation(ex.embedding()?),
        }
    }
}

/// Fills `specific_embedding` with the model's representation of each example.
pub fn attach_specific(examples: &mut [Example], model: &LinearSoftmaxModel) -> Result<()> {
    for ex in examples.iter_mut() {
        let r = model.representation(ex.embedding()?)?;
        ex.specific_embedding = Some(r);
    }
    Ok(())
}

/// Fills missing agnostic embeddings with hashed encodings of the given fields.
pub fn attach_hashed(examples: &mut [Example], fields: FieldVariant, dim: usize, seed: u64) -> Result<()> {
    for ex in examples.iter_mut().filter(|e| e.agnostic_embedding.is_none()) {
        ex.agnostic_embedding = Some(hash_encode(&fields.text_of(ex)?, dim, seed));
    }
    Ok(())
}
