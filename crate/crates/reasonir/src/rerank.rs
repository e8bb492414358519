//! Pointwise LLM reranking with per-domain prompts and strict score parsing.
//!
//! Each of the top K candidates is scored independently by a chat model that
//! must answer `Relevance score: X.` with X in 0..5; scores are normalized
//! to X/5. A candidate whose call fails or whose answer cannot be parsed
//! keeps its place with score 0.0 and is listed in a failure report;
//! reranking never drops or invents candidates. Because only six score
//! levels exist, lists longer than six candidates always contain ties,
//! which is why the fusion rules exist.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, RankedList};
use crate::gateway::{ChatMessage, ChatRequest, Gateway};
use crate::prompts::{self, splice_positional};

/// Run tag carried by raw reranker output.
pub const RERANK_RAW_TAG: &str = "qwenrerank-raw";

/// Chat model assumed when the caller does not pick one.
pub const DEFAULT_RERANK_MODEL: &str = "qwen2.5-32b-instruct";

#[derive(Debug, thiserror::Error)]
pub enum RerankError {
    #[error("no candidates to rerank")]
    EmptyCandidates,
    #[error("score parse failed: {0}")]
    Parse(String),
    #[error("no document text for candidate {doc_id:?}")]
    MissingDoc { doc_id: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Which per-domain prompt wraps the (query, document) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankDomain {
    Stackexchange,
    Aops,
    Leetcode,
    Pony,
    Theoq,
    Theot,
}

impl RerankDomain {
    pub const ALL: [RerankDomain; 6] = [
        RerankDomain::Stackexchange,
        RerankDomain::Aops,
        RerankDomain::Leetcode,
        RerankDomain::Pony,
        RerankDomain::Theoq,
        RerankDomain::Theot,
    ];

    /// The verbatim template for this domain.
    pub fn template(self) -> &'static str {
        match self {
            RerankDomain::Stackexchange => prompts::RERANK_STACKEXCHANGE,
            RerankDomain::Aops => prompts::RERANK_AOPS,
            RerankDomain::Leetcode => prompts::RERANK_LEETCODE,
            RerankDomain::Pony => prompts::RERANK_PONY,
            RerankDomain::Theoq => prompts::RERANK_THEOQ,
            RerankDomain::Theot => prompts::RERANK_THEOT,
        }
    }
}

impl std::str::FromStr for RerankDomain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stackexchange" => Ok(RerankDomain::Stackexchange),
            "aops" => Ok(RerankDomain::Aops),
            "leetcode" => Ok(RerankDomain::Leetcode),
            "pony" => Ok(RerankDomain::Pony),
            "theoq" => Ok(RerankDomain::Theoq),
            "theot" => Ok(RerankDomain::Theot),
            other => Err(format!(
                "unknown rerank domain {other:?} (stackexchange|aops|leetcode|pony|theoq|theot)"
            )),
        }
    }
}

impl std::fmt::Display for RerankDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            RerankDomain::Stackexchange => "stackexchange",
            RerankDomain::Aops => "aops",
            RerankDomain::Leetcode => "leetcode",
            RerankDomain::Pony => "pony",
            RerankDomain::Theoq => "theoq",
            RerankDomain::Theot => "theot",
        };
        f.write_str(name)
    }
}

/// Fill the domain template with the query and document; a single user
/// message, no system prompt, deterministic temperature.
pub fn build_rerank_prompt(domain: RerankDomain, query_text: &str, doc_text: &str) -> ChatRequest {
    let user = splice_positional(domain.template(), &[query_text, doc_text])
        .expect("rerank templates have exactly two slots");
    ChatRequest {
        system: None,
        messages: vec![ChatMessage::user(user)],
        max_tokens: 64,
        temperature: 0.0,
        model: DEFAULT_RERANK_MODEL.to_string(),
    }
}

fn score_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)relevance\s+score:\s*(\d+)").expect("valid regex"))
}

/// Extract the first `Relevance score: X` (case-insensitive) with X in 0..5.
pub fn parse_score(text: &str) -> Result<u32, RerankError> {
    let captures = score_regex()
        .captures(text)
        .ok_or_else(|| RerankError::Parse(format!("no relevance score in {text:?}")))?;
    let digits = captures.get(1).expect("group 1").as_str();
    let value: u32 = digits
        .parse()
        .map_err(|_| RerankError::Parse(format!("unreadable score {digits:?}")))?;
    if value > 5 {
        return Err(RerankError::Parse(format!("score {value} outside 0..5")));
    }
    Ok(value)
}

/// Reranking knobs.
#[derive(Debug, Clone)]
pub struct RerankOptions {
    /// How many top candidates to score.
    pub k: usize,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for RerankOptions {
    fn default() -> Self {
        RerankOptions {
            k: 100,
            model: DEFAULT_RERANK_MODEL.to_string(),
            temperature: 0.0,
            max_tokens: 64,
        }
    }
}

/// Candidates whose call or score parse failed, serialized as
/// `{"query_id": ..., "failed_doc_ids": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureReport {
    pub query_id: String,
    pub failed_doc_ids: Vec<String>,
}

impl FailureReport {
    pub fn is_clean(&self) -> bool {
        self.failed_doc_ids.is_empty()
    }
}

/// Raw reranker scores plus the failure report.
#[derive(Debug)]
pub struct RerankOutcome {
    pub list: RankedList,
    pub failures: FailureReport,
}

/// Score the top `options.k` candidates pointwise and return them re-sorted
/// by normalized score. Requires the text of every considered candidate.
pub fn rerank(
    gateway: &Gateway,
    domain: RerankDomain,
    query_text: &str,
    candidates: &RankedList,
    doc_texts: &BTreeMap<&str, &str>,
    options: &RerankOptions,
) -> Result<RerankOutcome, RerankError> {
    if candidates.entries.is_empty() {
        return Err(RerankError::EmptyCandidates);
    }
    let considered: Vec<&str> = candidates
        .entries
        .iter()
        .take(options.k)
        .map(|e| e.doc_id.as_str())
        .collect();
    let mut requests = Vec::with_capacity(considered.len());
    for doc_id in &considered {
        let text = doc_texts.get(doc_id).ok_or_else(|| RerankError::MissingDoc {
            doc_id: (*doc_id).to_string(),
        })?;
        let mut request = build_rerank_prompt(domain, query_text, text);
        request.model = options.model.clone();
        request.temperature = options.temperature;
        request.max_tokens = options.max_tokens;
        requests.push(request);
    }
    let responses = gateway.chat_many(&requests);

    let mut pairs = Vec::with_capacity(considered.len());
    let mut failed = Vec::new();
    for (doc_id, response) in considered.iter().zip(responses) {
        let score = response
            .map_err(|e| RerankError::Parse(e.to_string()))
            .and_then(|text| parse_score(&text));
        match score {
            Ok(value) => pairs.push(((*doc_id).to_string(), value as f64 / 5.0)),
            Err(_) => {
                pairs.push(((*doc_id).to_string(), 0.0));
                failed.push((*doc_id).to_string());
            }
        }
    }
    let list = RankedList::from_scores(candidates.query_id.clone(), RERANK_RAW_TAG, pairs)?;
    Ok(RerankOutcome {
        list,
        failures: FailureReport {
            query_id: candidates.query_id.clone(),
            failed_doc_ids: failed,
        },
    })
}

/// Tie structure of a ranked list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieStats {
    pub distinct_scores: usize,
    pub max_tie_group: usize,
    /// Fraction of adjacent rank pairs with equal scores; 0 for one entry.
    pub tied_fraction: f64,
}

pub fn tie_statistics(list: &RankedList) -> Result<TieStats, RerankError> {
    if list.entries.is_empty() {
        return Err(RerankError::EmptyCandidates);
    }
    let scores: Vec<f64> = list.entries.iter().map(|e| e.score).collect();
    let mut distinct = 1;
    let mut max_group = 1;
    let mut current_group = 1;
    let mut tied_pairs = 0;
    for pair in scores.windows(2) {
        if pair[0] == pair[1] {
            tied_pairs += 1;
            current_group += 1;
        } else {
            distinct += 1;
            current_group = 1;
        }
        max_group = max_group.max(current_group);
    }
    let adjacent = scores.len().saturating_sub(1);
    Ok(TieStats {
        distinct_scores: distinct,
        max_tie_group: max_group,
        tied_fraction: if adjacent == 0 {
            0.0
        } else {
            tied_pairs as f64 / adjacent as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{canonical_chat, hash_value, FixtureStore, Gateway, ProviderConfig};
    use proptest::prelude::*;
    use serde_json::json;
    use tempfile::tempdir;

    #[test]
    fn parse_score_examples() {
        assert_eq!(parse_score("Relevance score: 4.").unwrap(), 4);
        assert_eq!(parse_score("relevance score: 0").unwrap(), 0);
        assert_eq!(parse_score("Sure!\nRelevance Score:  3\nDone.").unwrap(), 3);
        assert!(matches!(
            parse_score("It is relevant."),
            Err(RerankError::Parse(_))
        ));
        assert!(matches!(
            parse_score("Relevance score: 7."),
            Err(RerankError::Parse(_))
        ));
        // First match wins.
        assert_eq!(
            parse_score("Relevance score: 2. Or maybe relevance score: 5.").unwrap(),
            2
        );
    }

    #[test]
    fn prompt_wraps_query_and_document() {
        let req = build_rerank_prompt(RerankDomain::Stackexchange, "MY_QUERY", "MY_DOC");
        assert!(req.system.is_none());
        let user = &req.messages[0].content;
        assert!(user.contains("<start_query>\nMY_QUERY\n<end_query>"));
        assert!(user.contains("<start_document>\nMY_DOC\n<end_document>"));
        assert_eq!(req.temperature, 0.0);

        let aops = build_rerank_prompt(RerankDomain::Aops, "P", "D");
        assert!(aops.messages[0]
            .content
            .contains("shares **any** overlapping techniques"));

        for domain in RerankDomain::ALL {
            let r = build_rerank_prompt(domain, "q-text", "d-text");
            let u = &r.messages[0].content;
            assert!(u.contains("q-text"), "{domain:?}");
            assert!(u.contains("d-text"), "{domain:?}");
            assert!(u.find("q-text").unwrap() < u.find("d-text").unwrap(), "{domain:?}");
        }
    }

    #[test]
    fn domain_round_trips_through_strings() {
        for domain in RerankDomain::ALL {
            let s = domain.to_string();
            assert_eq!(s.parse::<RerankDomain>().unwrap(), domain);
        }
        assert!("nope".parse::<RerankDomain>().is_err());
    }

    fn store_answer(dir: &std::path::Path, request: &ChatRequest, text: &str) {
        let canonical = canonical_chat(request);
        FixtureStore::new(dir)
            .put(&hash_value(&canonical), &canonical, &json!({ "text": text }))
            .unwrap();
    }

    fn candidates(ids_scores: &[(&str, f64)]) -> RankedList {
        RankedList::from_scores(
            "q1",
            "bm25",
            ids_scores
                .iter()
                .map(|(id, s)| (id.to_string(), *s))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rerank_normalizes_parsed_scores() {
        let dir = tempdir().unwrap();
        let options = RerankOptions::default();
        let texts: BTreeMap<&str, &str> =
            [("d1", "text one"), ("d2", "text two")].into_iter().collect();
        store_answer(
            dir.path(),
            &build_rerank_prompt(RerankDomain::Stackexchange, "the query", "text one"),
            "Relevance score: 5.",
        );
        store_answer(
            dir.path(),
            &build_rerank_prompt(RerankDomain::Stackexchange, "the query", "text two"),
            "Relevance score: 3.",
        );
        let gateway = Gateway::new(ProviderConfig::replay(dir.path())).unwrap();
        let outcome = rerank(
            &gateway,
            RerankDomain::Stackexchange,
            "the query",
            &candidates(&[("d2", 9.0), ("d1", 8.0)]),
            &texts,
            &options,
        )
        .unwrap();
        assert!(outcome.failures.is_clean());
        assert_eq!(outcome.list.system_tag, RERANK_RAW_TAG);
        assert_eq!(outcome.list.query_id, "q1");
        assert_eq!(outcome.list.entries[0].doc_id, "d1");
        assert!((outcome.list.entries[0].score - 1.0).abs() < 1e-12);
        assert_eq!(outcome.list.entries[1].doc_id, "d2");
        assert!((outcome.list.entries[1].score - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unparseable_answers_score_zero_and_are_reported() {
        let dir = tempdir().unwrap();
        let texts: BTreeMap<&str, &str> =
            [("d1", "one"), ("d2", "two")].into_iter().collect();
        for doc in ["one", "two"] {
            store_answer(
                dir.path(),
                &build_rerank_prompt(RerankDomain::Aops, "q", doc),
                "I cannot say.",
            );
        }
        let gateway = Gateway::new(ProviderConfig::replay(dir.path())).unwrap();
        let outcome = rerank(
            &gateway,
            RerankDomain::Aops,
            "q",
            &candidates(&[("d1", 2.0), ("d2", 1.0)]),
            &texts,
            &RerankOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.failures.failed_doc_ids, vec!["d1", "d2"]);
        assert!(outcome.list.entries.iter().all(|e| e.score == 0.0));
        // All tied at zero: doc-id order.
        assert_eq!(outcome.list.entries[0].doc_id, "d1");
    }

    #[test]
    fn gateway_misses_degrade_to_zero_scores() {
        let dir = tempdir().unwrap();
        let texts: BTreeMap<&str, &str> =
            [("good", "scored text"), ("bad", "unscored text")].into_iter().collect();
        store_answer(
            dir.path(),
            &build_rerank_prompt(RerankDomain::Theoq, "q", "scored text"),
            "Relevance score: 4.",
        );
        let gateway = Gateway::new(ProviderConfig::replay(dir.path())).unwrap();
        let outcome = rerank(
            &gateway,
            RerankDomain::Theoq,
            "q",
            &candidates(&[("good", 5.0), ("bad", 4.0)]),
            &texts,
            &RerankOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.failures.failed_doc_ids, vec!["bad"]);
        assert_eq!(outcome.list.entries[0].doc_id, "good");
        assert!((outcome.list.entries[0].score - 0.8).abs() < 1e-12);
        assert_eq!(outcome.list.entries[1].score, 0.0);
    }

    #[test]
    fn k_caps_candidates_considered() {
        let dir = tempdir().unwrap();
        let texts: BTreeMap<&str, &str> =
            [("top", "top text"), ("rest", "rest text")].into_iter().collect();
        // Only the top candidate has a fixture; with k=1 the second candidate
        // must never be requested.
        store_answer(
            dir.path(),
            &build_rerank_prompt(RerankDomain::Leetcode, "q", "top text"),
            "Relevance score: 2.",
        );
        let gateway = Gateway::new(ProviderConfig::replay(dir.path())).unwrap();
        let options = RerankOptions {
            k: 1,
            ..RerankOptions::default()
        };
        let outcome = rerank(
            &gateway,
            RerankDomain::Leetcode,
            "q",
            &candidates(&[("top", 9.0), ("rest", 1.0)]),
            &texts,
            &options,
        )
        .unwrap();
        assert!(outcome.failures.is_clean());
        assert_eq!(outcome.list.entries.len(), 1);
        assert_eq!(outcome.list.entries[0].doc_id, "top");
        assert!((outcome.list.entries[0].score - 0.4).abs() < 1e-12);
    }

    #[test]
    fn missing_doc_text_is_a_hard_error() {
        let dir = tempdir().unwrap();
        let gateway = Gateway::new(ProviderConfig::replay(dir.path())).unwrap();
        let texts: BTreeMap<&str, &str> = BTreeMap::new();
        assert!(matches!(
            rerank(
                &gateway,
                RerankDomain::Pony,
                "q",
                &candidates(&[("ghost", 1.0)]),
                &texts,
                &RerankOptions::default(),
            ),
            Err(RerankError::MissingDoc { .. })
        ));
    }

    #[test]
    fn empty_candidates_rejected() {
        let dir = tempdir().unwrap();
        let gateway = Gateway::new(ProviderConfig::replay(dir.path())).unwrap();
        let empty = RankedList::from_scores("q", "bm25", vec![]).unwrap();
        assert!(matches!(
            rerank(
                &gateway,
                RerankDomain::Theot,
                "q",
                &empty,
                &BTreeMap::new(),
                &RerankOptions::default(),
            ),
            Err(RerankError::EmptyCandidates)
        ));
    }

    fn list_of_scores(scores: &[f64]) -> RankedList {
        RankedList::from_scores(
            "q",
            "t",
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| (format!("d{i:03}"), s))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn tie_statistics_examples() {
        let stats = tie_statistics(&list_of_scores(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(stats.distinct_scores, 1);
        assert_eq!(stats.max_tie_group, 3);
        assert_eq!(stats.tied_fraction, 1.0);

        let stats = tie_statistics(&list_of_scores(&[1.0, 0.6, 0.2])).unwrap();
        assert_eq!(stats.distinct_scores, 3);
        assert_eq!(stats.tied_fraction, 0.0);

        let stats = tie_statistics(&list_of_scores(&[0.5])).unwrap();
        assert_eq!(stats.max_tie_group, 1);
        assert_eq!(stats.tied_fraction, 0.0);

        let empty = RankedList::from_scores("q", "t", vec![]).unwrap();
        assert!(tie_statistics(&empty).is_err());
    }

    #[test]
    fn hundred_scores_from_six_levels_have_at_most_six_distinct() {
        let scores: Vec<f64> = (0..100).map(|i| (i % 6) as f64 / 5.0).collect();
        let stats = tie_statistics(&list_of_scores(&scores)).unwrap();
        assert!(stats.distinct_scores <= 6);
        assert!(stats.max_tie_group >= 2);
    }

    #[test]
    fn failure_report_json_shape() {
        let report = FailureReport {
            query_id: "q9".into(),
            failed_doc_ids: vec!["a".into(), "b".into()],
        };
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(json, "{\"query_id\":\"q9\",\"failed_doc_ids\":[\"a\",\"b\"]}");
    }

    proptest! {
        /// Pigeonhole: more than six candidates scored in sixths always tie.
        #[test]
        fn more_than_six_normalized_scores_always_tie(
            levels in proptest::collection::vec(0u32..6, 7..40)
        ) {
            let scores: Vec<f64> = levels.iter().map(|&l| l as f64 / 5.0).collect();
            let stats = tie_statistics(&list_of_scores(&scores)).unwrap();
            prop_assert!(stats.distinct_scores <= 6);
            prop_assert!(stats.max_tie_group >= 2);
            prop_assert!(stats.tied_fraction > 0.0);
        }
    }
}
