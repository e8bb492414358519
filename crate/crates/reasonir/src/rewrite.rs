//! Reasoning query rewriting with length control, plus the decomposition
//! baseline and the length-scaling sweep.
//!
//! A rewrite asks a chat model to reason about the query and drafts an
//! answer; the assistant text then replaces the original query for retrieval
//! (or is concatenated behind it). Length control appends one constraint
//! sentence and caps the response tokens to the same number.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::corpus::{CorpusError, Judgments, Query, QueryVariant, RankedList};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::metrics::{ndcg_at_k, recall_at_k, GainMode};
use crate::prompts::{render, PromptError, RQ_SYSTEM, RQ_USER, RQ_USER_LENGTH};
use crate::Retriever;

/// Chat model assumed when the caller does not pick one.
pub const DEFAULT_CHAT_MODEL: &str = "gpt-4";

/// Response cap for un-length-controlled rewrites.
pub const DEFAULT_REWRITE_MAX_TOKENS: u32 = 1024;

/// Grid used by the length sweep when none is given.
pub const DEFAULT_SWEEP_GRID: &[u32] = &[64, 128, 256, 512, 1024, 2048];

#[derive(Debug, thiserror::Error)]
pub enum RewriteError {
    #[error("gateway call failed")]
    Gateway(#[from] GatewayError),
    #[error("empty rewrite for query {query_id:?}")]
    EmptyRewrite { query_id: String },
    #[error("expected 3 sub-queries, parsed {got} for query {query_id:?}")]
    DecomposeParse { query_id: String, got: usize },
    #[error("sweep grid must be strictly increasing positive integers")]
    BadGrid,
    #[error("nothing to fuse: no ranked lists given")]
    NothingToFuse,
    #[error("retriever failed: {0}")]
    Retrieve(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Knobs shared by the rewriting operations.
#[derive(Debug, Clone)]
pub struct RewriteOptions {
    /// Keep the original text and append the rewrite after a newline.
    pub concat: bool,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for RewriteOptions {
    fn default() -> Self {
        RewriteOptions {
            concat: false,
            model: DEFAULT_CHAT_MODEL.to_string(),
            temperature: 0.0,
            max_tokens: DEFAULT_REWRITE_MAX_TOKENS,
        }
    }
}

/// The rewriting prompt: helpful-assistant system message, then the query
/// followed by the three numbered reasoning instructions.
pub fn build_rq_prompt(query_text: &str) -> ChatRequest {
    let user = render(RQ_USER, &[("cur_post", query_text)]).expect("template keys known");
    ChatRequest {
        system: Some(RQ_SYSTEM.to_string()),
        messages: vec![ChatMessage::user(user)],
        max_tokens: DEFAULT_REWRITE_MAX_TOKENS,
        temperature: 0.0,
        model: DEFAULT_CHAT_MODEL.to_string(),
    }
}

/// Same prompt plus one sentence bounding the answer length; the request's
/// `max_tokens` is capped to the same value.
pub fn build_rq_prompt_length_controlled(query_text: &str, max_tokens: u32) -> ChatRequest {
    let user = render(
        RQ_USER_LENGTH,
        &[
            ("cur_post", query_text),
            ("MAX_TOKENS", &max_tokens.to_string()),
        ],
    )
    .expect("template keys known");
    ChatRequest {
        system: Some(RQ_SYSTEM.to_string()),
        messages: vec![ChatMessage::user(user)],
        max_tokens,
        temperature: 0.0,
        model: DEFAULT_CHAT_MODEL.to_string(),
    }
}

fn apply_options(mut request: ChatRequest, options: &RewriteOptions) -> ChatRequest {
    request.model = options.model.clone();
    request.temperature = options.temperature;
    request
}

/// Rewrite one query through the gateway.
pub fn rewrite(
    gateway: &Gateway,
    query: &Query,
    options: &RewriteOptions,
) -> Result<Query, RewriteError> {
    let mut request = apply_options(build_rq_prompt(&query.text), options);
    request.max_tokens = options.max_tokens;
    let output = gateway.chat(&request)?;
    if output.trim().is_empty() {
        return Err(RewriteError::EmptyRewrite {
            query_id: query.id.clone(),
        });
    }
    let text = if options.concat {
        format!("{}\n{}", query.text, output)
    } else {
        output
    };
    Ok(Query {
        id: format!("{}-rq", query.id),
        text,
        variant: QueryVariant::Rewritten,
        parent_id: Some(query.id.clone()),
    })
}

/// Rewrite with the length-controlled prompt at `max_tokens`.
pub fn rewrite_length_controlled(
    gateway: &Gateway,
    query: &Query,
    max_tokens: u32,
    options: &RewriteOptions,
) -> Result<Query, RewriteError> {
    let request = apply_options(
        build_rq_prompt_length_controlled(&query.text, max_tokens),
        options,
    );
    let output = gateway.chat(&request)?;
    if output.trim().is_empty() {
        return Err(RewriteError::EmptyRewrite {
            query_id: query.id.clone(),
        });
    }
    let text = if options.concat {
        format!("{}\n{}", query.text, output)
    } else {
        output
    };
    Ok(Query {
        id: format!("{}-rq{}", query.id, max_tokens),
        text,
        variant: QueryVariant::Rewritten,
        parent_id: Some(query.id.clone()),
    })
}

/// The decomposition prompt is a single user message asking for exactly
/// three search queries.
pub fn build_decompose_prompt(query_text: &str) -> ChatRequest {
    let user = render(crate::prompts::DECOMPOSE, &[("question", query_text)])
        .expect("template keys known");
    ChatRequest {
        system: None,
        messages: vec![ChatMessage::user(user)],
        max_tokens: 256,
        temperature: 0.0,
        model: DEFAULT_CHAT_MODEL.to_string(),
    }
}

/// Strip a leading list marker (`1.`, `2)`, `-`, `*`) from one output line.
fn strip_marker(line: &str) -> &str {
    let trimmed = line.trim();
    let rest = trimmed.trim_start_matches(|c: char| c.is_ascii_digit());
    if rest.len() < trimmed.len() {
        if let Some(stripped) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return stripped.trim();
        }
        return trimmed;
    }
    if let Some(stripped) = trimmed
        .strip_prefix("- ")
        .or_else(|| trimmed.strip_prefix("* "))
    {
        return stripped.trim();
    }
    trimmed
}

/// Split one query into exactly three sub-queries.
pub fn decompose(
    gateway: &Gateway,
    query: &Query,
    options: &RewriteOptions,
) -> Result<Vec<Query>, RewriteError> {
    let request = apply_options(build_decompose_prompt(&query.text), options);
    let output = gateway.chat(&request)?;
    let subs: Vec<&str> = output
        .lines()
        .map(strip_marker)
        .filter(|l| !l.is_empty())
        .collect();
    if subs.len() != 3 {
        return Err(RewriteError::DecomposeParse {
            query_id: query.id.clone(),
            got: subs.len(),
        });
    }
    Ok(subs
        .into_iter()
        .enumerate()
        .map(|(i, text)| Query {
            id: format!("{}-sub{}", query.id, i + 1),
            text: text.to_string(),
            variant: QueryVariant::DecomposedSub,
            parent_id: Some(query.id.clone()),
        })
        .collect())
}

/// Fuse per-sub-query results by keeping each document's maximum score.
/// Only documents appearing in at least one sub-list survive.
pub fn fuse_max(
    query_id: &str,
    system_tag: &str,
    lists: &[RankedList],
) -> Result<RankedList, RewriteError> {
    if lists.is_empty() {
        return Err(RewriteError::NothingToFuse);
    }
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for list in lists {
        for entry in &list.entries {
            best.entry(entry.doc_id.as_str())
                .and_modify(|s| *s = s.max(entry.score))
                .or_insert(entry.score);
        }
    }
    let pairs = best
        .into_iter()
        .map(|(doc, score)| (doc.to_string(), score))
        .collect();
    Ok(RankedList::from_scores(query_id, system_tag, pairs)?)
}

/// One measured grid point of the length sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub length: u32,
    pub ndcg_at_10: f64,
    pub recall_at_100: f64,
}

/// Sweep results: measured points plus per-point failures.
#[derive(Debug)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub errors: Vec<(u32, String)>,
}

fn validate_grid(grid: &[u32]) -> Result<(), RewriteError> {
    if grid.is_empty() || grid[0] == 0 {
        return Err(RewriteError::BadGrid);
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RewriteError::BadGrid);
    }
    Ok(())
}

/// For each grid length: rewrite every query at that length, retrieve with
/// the rewritten text, and average nDCG@10 and Recall@100 over the queries.
/// A failure at one grid point is recorded and the sweep continues.
pub fn length_sweep(
    gateway: &Gateway,
    queries: &[Query],
    judgments: &Judgments,
    grid: &[u32],
    retriever: &dyn Retriever,
    k: usize,
    options: &RewriteOptions,
) -> Result<SweepOutcome, RewriteError> {
    validate_grid(grid)?;
    let mut points = Vec::new();
    let mut errors = Vec::new();
    for &length in grid {
        match sweep_point(gateway, queries, judgments, length, retriever, k, options) {
            Ok(point) => points.push(point),
            Err(e) => errors.push((length, e.to_string())),
        }
    }
    Ok(SweepOutcome { points, errors })
}

fn sweep_point(
    gateway: &Gateway,
    queries: &[Query],
    judgments: &Judgments,
    length: u32,
    retriever: &dyn Retriever,
    k: usize,
    options: &RewriteOptions,
) -> Result<SweepPoint, RewriteError> {
    let mut ndcg_sum = 0.0;
    let mut recall_sum = 0.0;
    for query in queries {
        let rewritten = rewrite_length_controlled(gateway, query, length, options)?;
        let mut list = retriever
            .search(&rewritten.text, k)
            .map_err(|e| RewriteError::Retrieve(e.to_string()))?;
        list.query_id = query.id.clone();
        ndcg_sum += ndcg_at_k(&list, judgments, 10, GainMode::Exponential);
        recall_sum += recall_at_k(&list, judgments, 100);
    }
    let n = queries.len().max(1) as f64;
    Ok(SweepPoint {
        length,
        ndcg_at_10: ndcg_sum / n,
        recall_at_100: recall_sum / n,
    })
}

/// Render sweep points as CSV with a header row and 6-decimal floats.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("length,ndcg_at_10,recall_at_100\n");
    for p in points {
        writeln!(out, "{},{:.6},{:.6}", p.length, p.ndcg_at_10, p.recall_at_100)
            .expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bm25::{Bm25Params, Bm25Retriever, InvertedIndex};
    use crate::corpus::{Corpus, Document};
    use crate::gateway::{canonical_chat, hash_value, FixtureStore, Mode, ProviderConfig};
    use serde_json::json;
    use tempfile::tempdir;

    #[test]
    fn rq_prompt_shape() {
        let req = build_rq_prompt("Why is the sky blue?");
        assert_eq!(req.system.as_deref(), Some(RQ_SYSTEM));
        assert_eq!(req.messages.len(), 1);
        let user = &req.messages[0].content;
        assert!(user.contains("Why is the sky blue?"));
        assert!(user.contains("Identify the essential problem."));
        for marker in ["1. ", "2. ", "3. "] {
            let count = user
                .lines()
                .filter(|l| l.trim_start().starts_with(marker))
                .count();
            assert_eq!(count, 1, "marker {marker:?}");
        }
    }

    #[test]
    fn length_controlled_prompt_appends_one_sentence() {
        let plain = build_rq_prompt("Q");
        let bounded = build_rq_prompt_length_controlled("Q", 256);
        assert_eq!(bounded.max_tokens, 256);
        let plain_user = &plain.messages[0].content;
        let bounded_user = &bounded.messages[0].content;
        assert!(bounded_user.starts_with(plain_user.as_str()));
        let suffix = &bounded_user[plain_user.len()..];
        assert_eq!(suffix, "\nYour answer must be written within 256 tokens.");
        assert_eq!(bounded_user.matches("must be written within").count(), 1);

        let bounded = build_rq_prompt_length_controlled("Q", 64);
        assert!(bounded.messages[0]
            .content
            .ends_with("within 64 tokens."));
        assert_eq!(bounded.max_tokens, 64);
    }

    fn replay_gateway(dir: &std::path::Path) -> Gateway {
        Gateway::new(ProviderConfig::replay(dir)).unwrap()
    }

    fn store_chat(dir: &std::path::Path, request: &ChatRequest, text: &str) {
        let canonical = canonical_chat(request);
        FixtureStore::new(dir)
            .put(&hash_value(&canonical), &canonical, &json!({ "text": text }))
            .unwrap();
    }

    #[test]
    fn rewrite_replay_builds_derived_query() {
        let dir = tempdir().unwrap();
        let query = Query::original("q1", "What causes tides?");
        let options = RewriteOptions::default();
        store_chat(
            dir.path(),
            &build_rq_prompt(&query.text),
            "The moon's gravity pulls the oceans.",
        );
        let gateway = replay_gateway(dir.path());
        let rewritten = rewrite(&gateway, &query, &options).unwrap();
        assert_eq!(rewritten.text, "The moon's gravity pulls the oceans.");
        assert_eq!(rewritten.variant, QueryVariant::Rewritten);
        assert_eq!(rewritten.parent_id.as_deref(), Some("q1"));
    }

    #[test]
    fn rewrite_concat_prepends_original() {
        let dir = tempdir().unwrap();
        let query = Query::original("q1", "What causes tides?");
        store_chat(dir.path(), &build_rq_prompt(&query.text), "Gravity.");
        let gateway = replay_gateway(dir.path());
        let options = RewriteOptions {
            concat: true,
            ..RewriteOptions::default()
        };
        let rewritten = rewrite(&gateway, &query, &options).unwrap();
        assert_eq!(rewritten.text, "What causes tides?\nGravity.");
    }

    #[test]
    fn empty_rewrite_is_an_error() {
        let dir = tempdir().unwrap();
        let query = Query::original("q1", "Q");
        store_chat(dir.path(), &build_rq_prompt("Q"), "  \n ");
        let gateway = replay_gateway(dir.path());
        assert!(matches!(
            rewrite(&gateway, &query, &RewriteOptions::default()),
            Err(RewriteError::EmptyRewrite { .. })
        ));
    }

    #[test]
    fn decompose_strips_markers_and_requires_three() {
        let dir = tempdir().unwrap();
        let query = Query::original("q7", "How do plants grow?");
        let options = RewriteOptions::default();
        store_chat(
            dir.path(),
            &build_decompose_prompt(&query.text),
            "1. photosynthesis basics\n2. role of roots\n3. plant cell division\n",
        );
        let gateway = replay_gateway(dir.path());
        let subs = decompose(&gateway, &query, &options).unwrap();
        assert_eq!(subs.len(), 3);
        assert_eq!(subs[0].text, "photosynthesis basics");
        assert_eq!(subs[2].text, "plant cell division");
        assert!(subs.iter().all(|s| s.variant == QueryVariant::DecomposedSub));
        assert!(subs.iter().all(|s| s.parent_id.as_deref() == Some("q7")));
        let ids: std::collections::HashSet<&str> =
            subs.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn decompose_accepts_bullets_and_blank_lines() {
        let dir = tempdir().unwrap();
        let query = Query::original("q8", "Q");
        store_chat(
            dir.path(),
            &build_decompose_prompt("Q"),
            "- alpha\n\n- beta\n- gamma",
        );
        let gateway = replay_gateway(dir.path());
        let subs = decompose(&gateway, &query, &RewriteOptions::default()).unwrap();
        assert_eq!(subs[1].text, "beta");
    }

    #[test]
    fn decompose_wrong_count_errors() {
        let dir = tempdir().unwrap();
        let query = Query::original("q9", "Q2");
        store_chat(dir.path(), &build_decompose_prompt("Q2"), "only\ntwo");
        let gateway = replay_gateway(dir.path());
        match decompose(&gateway, &query, &RewriteOptions::default()) {
            Err(RewriteError::DecomposeParse { got, .. }) => assert_eq!(got, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn fuse_max_takes_per_doc_maximum() {
        let a = RankedList::from_scores(
            "q",
            "s1",
            vec![("a".into(), 1.0), ("b".into(), 2.0)],
        )
        .unwrap();
        let b = RankedList::from_scores(
            "q",
            "s2",
            vec![("a".into(), 3.0), ("c".into(), 1.0)],
        )
        .unwrap();
        let fused = fuse_max("q", "fused", &[a, b]).unwrap();
        let pairs: Vec<(&str, f64)> = fused
            .entries
            .iter()
            .map(|e| (e.doc_id.as_str(), e.score))
            .collect();
        assert_eq!(pairs, vec![("a", 3.0), ("b", 2.0), ("c", 1.0)]);
        assert!(matches!(
            fuse_max("q", "fused", &[]),
            Err(RewriteError::NothingToFuse)
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid(DEFAULT_SWEEP_GRID).is_ok());
        assert!(validate_grid(&[]).is_err());
        assert!(validate_grid(&[0, 64]).is_err());
        assert!(validate_grid(&[64, 64]).is_err());
        assert!(validate_grid(&[128, 64]).is_err());
    }

    fn mini_retriever() -> Bm25Retriever {
        let corpus = Corpus::new(vec![
            Document {
                id: "moon".into(),
                title: None,
                text: "the moon's gravity pulls oceans causing tides".into(),
            },
            Document {
                id: "sun".into(),
                title: None,
                text: "the sun shines bright in the day sky".into(),
            },
        ])
        .unwrap();
        Bm25Retriever {
            index: InvertedIndex::build(&corpus, Bm25Params::default()).unwrap(),
        }
    }

    #[test]
    fn sweep_measures_each_grid_point() {
        let dir = tempdir().unwrap();
        let query = Query::original("q1", "What causes tides?");
        let options = RewriteOptions::default();
        for length in [64u32, 128] {
            store_chat(
                dir.path(),
                &build_rq_prompt_length_controlled(&query.text, length),
                "moon gravity oceans",
            );
        }
        let mut judgments = Judgments::new();
        judgments.insert("q1", "moon", 1);
        let gateway = replay_gateway(dir.path());
        let retriever = mini_retriever();
        let outcome = length_sweep(
            &gateway,
            std::slice::from_ref(&query),
            &judgments,
            &[64, 128],
            &retriever,
            100,
            &options,
        )
        .unwrap();
        assert!(outcome.errors.is_empty());
        assert_eq!(outcome.points.len(), 2);
        // Same fixture text at both lengths, so identical metrics.
        assert_eq!(outcome.points[0].ndcg_at_10, outcome.points[1].ndcg_at_10);
        assert_eq!(outcome.points[0].recall_at_100, 1.0);

        let csv = sweep_csv(&outcome.points);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("length,ndcg_at_10,recall_at_100"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("64,"));
        assert_eq!(row.split(',').count(), 3);
        assert_eq!(row.split(',').nth(2).unwrap(), "1.000000");
    }

    #[test]
    fn sweep_records_partial_failures() {
        let dir = tempdir().unwrap();
        let query = Query::original("q1", "What causes tides?");
        store_chat(
            dir.path(),
            &build_rq_prompt_length_controlled(&query.text, 64),
            "moon gravity",
        );
        let mut judgments = Judgments::new();
        judgments.insert("q1", "moon", 1);
        let gateway = replay_gateway(dir.path());
        let retriever = mini_retriever();
        let outcome = length_sweep(
            &gateway,
            std::slice::from_ref(&query),
            &judgments,
            &[64, 128],
            &retriever,
            100,
            &RewriteOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.points.len(), 1);
        assert_eq!(outcome.points[0].length, 64);
        assert_eq!(outcome.errors.len(), 1);
        assert_eq!(outcome.errors[0].0, 128);
    }
}
