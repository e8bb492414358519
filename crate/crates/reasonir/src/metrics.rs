//! Ranking metrics: nDCG@k, Recall@k, the grade-oracle reranking bound, and
//! the list-agreement measures (top-k overlap and gold overlap).
//!
//! All metrics are pure functions over a [`RankedList`] and [`Judgments`].
//! nDCG defaults to exponential gain `2^rel - 1` with a linear-gain mode.
//! Overlap measures return percentages in `[0, 100]` averaged over queries;
//! a query without a usable denominator is skipped, not counted as zero.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Judgments, RankedList};

/// How a relevance grade turns into DCG gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    /// `2^rel - 1`; strongly favors high grades.
    Exponential,
    /// `rel` as-is.
    Linear,
}

impl Default for GainMode {
    fn default() -> Self {
        GainMode::Exponential
    }
}

fn gain(mode: GainMode, rel: u32) -> f64 {
    match mode {
        GainMode::Exponential => 2f64.powi(rel as i32) - 1.0,
        GainMode::Linear => rel as f64,
    }
}

/// Discounted cumulative gain of grades in rank order, truncated at `k`.
fn dcg(grades: &[u32], k: usize, mode: GainMode) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &rel)| gain(mode, rel) / ((i + 2) as f64).log2())
        .sum()
}

/// Normalized DCG at `k`; 0 when the query has no relevant documents.
/// The ideal ordering ranks every judged document by grade.
pub fn ndcg_at_k(list: &RankedList, judgments: &Judgments, k: usize, mode: GainMode) -> f64 {
    let Some(per_query) = judgments.for_query(&list.query_id) else {
        return 0.0;
    };
    let mut ideal: Vec<u32> = per_query.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k, mode);
    if idcg == 0.0 {
        return 0.0;
    }
    let ranked: Vec<u32> = list
        .entries
        .iter()
        .take(k)
        .map(|e| judgments.grade(&list.query_id, &e.doc_id))
        .collect();
    dcg(&ranked, k, mode) / idcg
}

/// Fraction of the query's relevant documents found in the top `k`.
pub fn recall_at_k(list: &RankedList, judgments: &Judgments, k: usize) -> f64 {
    let relevant = judgments.relevant_docs(&list.query_id);
    if relevant.is_empty() {
        return 0.0;
    }
    let found = list
        .entries
        .iter()
        .take(k)
        .filter(|e| relevant.contains(e.doc_id.as_str()))
        .count();
    found as f64 / relevant.len() as f64
}

/// nDCG@10 after re-sorting the given top-100 by grade (ties: retriever
/// score descending, then doc id). The ceiling any reranker of this
/// candidate set can reach.
pub fn oracle_ndcg_at_10(list: &RankedList, judgments: &Judgments, mode: GainMode) -> f64 {
    let Some(per_query) = judgments.for_query(&list.query_id) else {
        return 0.0;
    };
    let mut ideal: Vec<u32> = per_query.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, 10, mode);
    if idcg == 0.0 {
        return 0.0;
    }
    let mut rows: Vec<(u32, f64, &str)> = list
        .entries
        .iter()
        .map(|e| {
            (
                judgments.grade(&list.query_id, &e.doc_id),
                e.score,
                e.doc_id.as_str(),
            )
        })
        .collect();
    rows.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| b.1.partial_cmp(&a.1).expect("finite scores"))
            .then_with(|| a.2.cmp(b.2))
    });
    let ranked: Vec<u32> = rows.iter().take(10).map(|r| r.0).collect();
    dcg(&ranked, 10, mode) / idcg
}

/// Overlap of two top-`k` lists for one query, as a percentage. The
/// denominator is the shorter effective depth `min(k, |A|, |B|)`; `None`
/// when either list is empty.
pub fn top_k_overlap_pair(a: &RankedList, b: &RankedList, k: usize) -> Option<f64> {
    let denom = k.min(a.entries.len()).min(b.entries.len());
    if denom == 0 {
        return None;
    }
    let top_a: HashSet<&str> = a.top_k_ids(k).into_iter().collect();
    let shared = b
        .top_k_ids(k)
        .into_iter()
        .filter(|id| top_a.contains(id))
        .count();
    Some(100.0 * shared as f64 / denom as f64)
}

/// Overlap of relevant documents the two systems retrieve, as a percentage:
/// gold found by both over gold found by either. `None` when neither system
/// finds any gold document.
pub fn gold_overlap_pair(
    a: &RankedList,
    b: &RankedList,
    judgments: &Judgments,
    k: usize,
) -> Option<f64> {
    let gold = judgments.relevant_docs(&a.query_id);
    let found_a: HashSet<&str> = a
        .top_k_ids(k)
        .into_iter()
        .filter(|id| gold.contains(id))
        .collect();
    let found_b: HashSet<&str> = b
        .top_k_ids(k)
        .into_iter()
        .filter(|id| gold.contains(id))
        .collect();
    let union = found_a.union(&found_b).count();
    if union == 0 {
        return None;
    }
    let both = found_a.intersection(&found_b).count();
    Some(100.0 * both as f64 / union as f64)
}

fn paired_by_query<'a>(
    a: &'a [RankedList],
    b: &'a [RankedList],
) -> Vec<(&'a RankedList, &'a RankedList)> {
    let by_id: BTreeMap<&str, &RankedList> =
        b.iter().map(|l| (l.query_id.as_str(), l)).collect();
    a.iter()
        .filter_map(|la| by_id.get(la.query_id.as_str()).map(|lb| (la, *lb)))
        .collect()
}

/// Mean [`top_k_overlap_pair`] over the queries both runs contain.
pub fn top_k_overlap(a: &[RankedList], b: &[RankedList], k: usize) -> Option<f64> {
    let values: Vec<f64> = paired_by_query(a, b)
        .into_iter()
        .filter_map(|(la, lb)| top_k_overlap_pair(la, lb, k))
        .collect();
    mean(&values)
}

/// Mean [`gold_overlap_pair`] over the queries both runs contain.
pub fn gold_overlap(
    a: &[RankedList],
    b: &[RankedList],
    judgments: &Judgments,
    k: usize,
) -> Option<f64> {
    let values: Vec<f64> = paired_by_query(a, b)
        .into_iter()
        .filter_map(|(la, lb)| gold_overlap_pair(la, lb, judgments, k))
        .collect();
    mean(&values)
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Unweighted mean over task scores; `None` for an empty map.
pub fn macro_average(per_task: &BTreeMap<String, f64>) -> Option<f64> {
    let values: Vec<f64> = per_task.values().copied().collect();
    mean(&values)
}

/// The three headline metrics for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    #[serde(rename = "ndcg@10")]
    pub ndcg_at_10: f64,
    #[serde(rename = "recall@100")]
    pub recall_at_100: f64,
    #[serde(rename = "oracle_ndcg@10")]
    pub oracle_ndcg_at_10: f64,
}

/// Macro-average the headline metrics over a run's queries.
///
/// nDCG treats queries without relevant documents as 0; the recall mean
/// skips them, since recall is undefined there.
pub fn evaluate_lists(lists: &[RankedList], judgments: &Judgments, mode: GainMode) -> TaskMetrics {
    let n = lists.len().max(1) as f64;
    let ndcg: f64 = lists
        .iter()
        .map(|l| ndcg_at_k(l, judgments, 10, mode))
        .sum::<f64>()
        / n;
    let oracle: f64 = lists
        .iter()
        .map(|l| oracle_ndcg_at_10(l, judgments, mode))
        .sum::<f64>()
        / n;
    let recalls: Vec<f64> = lists
        .iter()
        .filter(|l| !judgments.relevant_docs(&l.query_id).is_empty())
        .map(|l| recall_at_k(l, judgments, 100))
        .collect();
    TaskMetrics {
        ndcg_at_10: ndcg,
        recall_at_100: mean(&recalls).unwrap_or(0.0),
        oracle_ndcg_at_10: oracle,
    }
}

/// Per-task evaluation report, serialized as `{task: {metric: value}}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvalReport {
    pub tasks: BTreeMap<String, TaskMetrics>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,ndcg_at_10,recall_at_100,oracle_ndcg_at_10\n");
        for (task, m) in &self.tasks {
            writeln!(
                out,
                "{task},{:.6},{:.6},{:.6}",
                m.ndcg_at_10, m.recall_at_100, m.oracle_ndcg_at_10
            )
            .expect("string write");
        }
        out
    }
}
