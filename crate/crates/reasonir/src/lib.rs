//! Retrieval engine and evaluation toolkit for reasoning-intensive retrieval.
//!
//! The crate bundles the pieces needed to run retrieve-then-rerank experiments
//! on corpora where queries share little surface overlap with their relevant
//! documents: a BM25 inverted index, exact dense retrieval over precomputed
//! embeddings, hybrid and tie-breaking score fusion, chain-of-thought query
//! rewriting with length control, a pointwise LLM reranker, IR metrics with
//! oracle variants, a contrastive objective with analytic gradients and a
//! desk-scale linear-encoder trainer, a synthetic training-data pipeline with
//! multi-turn hard-negative generation, and a test-time compute model.
//!
//! All LLM-backed stages go through [`gateway`], which supports deterministic
//! record/replay so every pipeline is runnable and testable offline.

mod binfmt;

pub mod bm25;
pub mod contrastive;
pub mod corpus;
pub mod cost;
pub mod dense;
pub mod fusion;
pub mod gateway;
pub mod metrics;
pub mod prompts;
pub mod rerank;
pub mod rewrite;
pub mod synthesizer;

use corpus::RankedList;

/// Anything that can turn a query string into a ranked list of documents.
///
/// Implemented by the BM25 index and the dense retriever; query rewriting and
/// the length sweep are generic over this so they work with either backend.
pub trait Retriever {
    fn search(&self, query_text: &str, k: usize) -> Result<RankedList, RetrieveError>;
}

/// Error surfaced by a [`Retriever`] backend.
#[derive(Debug, thiserror::Error)]
pub enum RetrieveError {
    #[error("embedding failed")]
    Embed(#[from] dense::EmbedError),
    #[error("{0}")]
    Other(String),
}
