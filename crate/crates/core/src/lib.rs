//! Metagenome read representations built from a weighted k-mer co-occurrence
//! graph and a masked-token transformer, plus the downstream classifiers,
//! clustering and metrics used to evaluate them.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`seqio`]: FASTA/FASTQ parsing, quality filtering, label sidecars and the
//!   synthetic metagenome simulator.
//! - [`kmer`]: k-mer vocabulary and tokenization.
//! - [`structgraph`]: the global weighted directed k-mer graph.
//! - [`node2vec`]: biased random walks and skip-gram training of structural
//!   embeddings.
//! - [`mlm`]: transformer encoder pretrained with masked-token prediction.
//! - [`embed`]: per-k-mer and per-read feature vectors.
//! - [`downstream`]: classifiers, k-means, Hungarian matching and metrics.
//! - [`pipeline`]: configuration, artifact persistence and stage orchestration.

pub mod downstream;
pub mod embed;
pub mod error;
pub mod kmer;
pub mod mlm;
pub mod node2vec;
pub mod pipeline;
pub mod seed;
pub mod seqio;
pub mod structgraph;
pub mod table;

pub use error::{Error, Result};
