//! Multi-domain active learning toolkit.
//!
//! Given a small labeled sample of a target domain and a large unlabeled pool
//! drawn from other domains, the crate ranks (or budgets) source examples for
//! annotation, trains the resulting task model, and analyzes how the selection
//! strategies relate to one another.
//!
//! Modules, bottom-up:
//!
//! - [`data`]: examples, pools, deterministic target/source splits, ingestion.
//! - [`encoders`]: hashed bag-of-words encoder, mean embeddings, cosine.
//! - [`model`]: softmax-linear task model with Monte-Carlo dropout.
//! - [`gbdt`]: gradient-boosted tree discriminator with cross-validated prediction.
//! - [`acquisition`]: uncertainty, discriminative, similarity and reverse
//!   classification accuracy methods plus the two selection strategies.
//! - [`metrics`]: Kendall's tau, intra-family normalization, Wasserstein distances.
//! - [`synthetic`]: multi-domain Gaussian pool generator.
//! - [`harness`]: experiment cells, matrices, domain search and ablations.
//! - [`cli`]: the `mdal` command-line surface.

pub mod acquisition;
pub mod cli;
pub mod data;
pub mod encoders;
pub mod error;
pub mod gbdt;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod seeds;
pub mod synthetic;

pub use error::{Error, Result};
