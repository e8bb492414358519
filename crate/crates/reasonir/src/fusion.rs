//! Score fusion: hybrid sparse+dense interpolation and the two rules that
//! break raw reranker ties.
//!
//! Raw BM25 scores are unbounded and cosines live in [-1, 1], so hybrid
//! interpolation only makes sense after per-query min-max normalization;
//! callers normalize both sides, then [`hybrid`] mixes them at a ratio.
//! Reranker scores come in sixths (0, 0.2, .., 1.0), so any list longer
//! than six candidates has ties; [`fuse_reranker_bm25`] and
//! [`fuse_reranker_retriever`] add a retrieval signal scaled to reorder
//! only within a reranker tier, never across tiers.

use std::collections::BTreeMap;

use crate::corpus::{CorpusError, RankedList};

/// Weight on the reranker side of [`fuse_reranker_bm25`]; raw BM25 scores
/// rarely approach 20, so tiers 0.2 apart stay separated.
pub const DEFAULT_RERANK_BM25_ALPHA: f64 = 100.0;

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("interpolation ratio {ratio} outside [0, 1]")]
    BadRatio { ratio: f64 },
    #[error("cannot fuse lists for different queries ({a:?} vs {b:?})")]
    QueryMismatch { a: String, b: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Map scores to [0, 1] per query via `(s - min) / (max - min)`. When all
/// scores are equal there is no spread to express, so every score becomes
/// 0.5. Entry order is unchanged.
pub fn minmax_normalize(list: &RankedList) -> RankedList {
    let mut out = list.clone();
    let (min, max) = out.entries.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), e| (lo.min(e.score), hi.max(e.score)),
    );
    for entry in &mut out.entries {
        entry.score = if max > min {
            (entry.score - min) / (max - min)
        } else {
            0.5
        };
    }
    out
}

fn score_map(list: &RankedList) -> BTreeMap<&str, f64> {
    list.entries
        .iter()
        .map(|e| (e.doc_id.as_str(), e.score))
        .collect()
}

fn combine(
    a: &RankedList,
    b: &RankedList,
    tag: &str,
    mut score: impl FnMut(f64, f64) -> f64,
) -> Result<RankedList, FusionError> {
    if a.query_id != b.query_id {
        return Err(FusionError::QueryMismatch {
            a: a.query_id.clone(),
            b: b.query_id.clone(),
        });
    }
    let side_a = score_map(a);
    let side_b = score_map(b);
    let pairs = side_a
        .keys()
        .chain(side_b.keys())
        .map(|&doc| doc.to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|doc| {
            let sa = side_a.get(doc.as_str()).copied().unwrap_or(0.0);
            let sb = side_b.get(doc.as_str()).copied().unwrap_or(0.0);
            let s = score(sa, sb);
            (doc, s)
        })
        .collect();
    Ok(RankedList::from_scores(a.query_id.clone(), tag, pairs)?)
}

/// Interpolate two normalized lists: `ratio·A + (1−ratio)·B` over the union
/// of their documents, a missing side contributing 0. Both inputs must be
/// min-max normalized first ([`minmax_normalize`]). Tagged `hybrid-r{ratio}`.
pub fn hybrid(a: &RankedList, b: &RankedList, ratio: f64) -> Result<RankedList, FusionError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(FusionError::BadRatio { ratio });
    }
    combine(a, b, &format!("hybrid-r{ratio}"), |sa, sb| {
        ratio * sa + (1.0 - ratio) * sb
    })
}

/// Break reranker ties with raw BM25: `alpha·S_reranker + S_bm25`. With the
/// default alpha of 100 and reranker scores in sixths, adjacent tiers differ
/// by 20, so BM25 reorders only within a tier when its scores stay below 20.
/// Tagged `qwenrerank+bm25`.
pub fn fuse_reranker_bm25(
    rerank: &RankedList,
    bm25: &RankedList,
    alpha: f64,
) -> Result<RankedList, FusionError> {
    combine(rerank, bm25, "qwenrerank+bm25", |sr, sb| alpha * sr + sb)
}

/// Break reranker ties with the normalized retriever score:
/// `0.5·S_reranker + 0.5·S_retriever`. The retriever side must be min-max
/// normalized. Tagged `qwenrerank+retriever`.
pub fn fuse_reranker_retriever(
    rerank: &RankedList,
    retriever_normalized: &RankedList,
) -> Result<RankedList, FusionError> {
    combine(rerank, retriever_normalized, "qwenrerank+retriever", |sr, st| {
        0.5 * sr + 0.5 * st
    })
}
