//! Corpora, queries, relevance judgments, run files, and shared tokenization.
//!
//! File formats are the plain-text interchange formats used by the rest of the
//! toolkit: corpora and queries are line-delimited JSON, judgments are
//! whitespace-separated qrels lines (`qid 0 docid grade`), and ranked results
//! use the 6-column TREC run format with scores printed to 6 decimal places.
//! Loaded values are immutable and safe to share across threads.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate id {id:?}")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        CorpusError::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}

/// One unit of the datastore: an identifier, an optional title, and body text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
}

/// Where a query came from, relative to the evaluation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryVariant {
    Original,
    Rewritten,
    DecomposedSub,
    SyntheticHq,
    SyntheticEq,
    SyntheticVl,
    SyntheticRq,
}

impl Default for QueryVariant {
    fn default() -> Self {
        QueryVariant::Original
    }
}

/// An evaluation or training query.
///
/// Rewritten and decomposed queries keep a `parent_id` pointing at the
/// original query they were derived from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub variant: QueryVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
}

impl Query {
    pub fn original(id: impl Into<String>, text: impl Into<String>) -> Self {
        Query {
            id: id.into(),
            text: text.into(),
            variant: QueryVariant::Original,
            parent_id: None,
        }
    }
}

/// Per-query relevance grades: query id -> (doc id -> grade >= 0).
///
/// A query with no entry has no known relevant documents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Judgments {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Judgments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) {
        self.grades
            .entry(query_id.into())
            .or_default()
            .insert(doc_id.into(), grade);
    }

    /// Grade for a (query, doc) pair; unjudged documents have grade 0.
    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.grades.get(query_id)
    }

    /// Doc ids with grade >= 1 for this query.
    pub fn relevant_docs(&self, query_id: &str) -> HashSet<&str> {
        self.grades
            .get(query_id)
            .map(|m| {
                m.iter()
                    .filter(|(_, &g)| g >= 1)
                    .map(|(d, _)| d.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }
}

/// One scored document inside a [`RankedList`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
}

/// Ordered per-query retrieval results, serializable as a TREC run.
///
/// Entries are always sorted by score descending with ties broken by doc id
/// ascending, and doc ids are unique within a list.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RunEntry>,
    pub system_tag: String,
}

impl RankedList {
    /// Build a list from unordered `(doc_id, score)` pairs, enforcing the
    /// ordering and uniqueness invariants.
    pub fn from_scores(
        query_id: impl Into<String>,
        system_tag: impl Into<String>,
        scores: Vec<(String, f64)>,
    ) -> Result<Self, CorpusError> {
        let query_id = query_id.into();
        let mut seen = HashSet::new();
        for (doc_id, score) in &scores {
            if !score.is_finite() {
                return Err(CorpusError::Validation(format!(
                    "non-finite score {score} for doc {doc_id:?} in query {query_id:?}"
                )));
            }
            if !seen.insert(doc_id.clone()) {
                return Err(CorpusError::Validation(format!(
                    "duplicate doc id {doc_id:?} in query {query_id:?}"
                )));
            }
        }
        let mut entries: Vec<RunEntry> = scores
            .into_iter()
            .map(|(doc_id, score)| RunEntry { doc_id, score })
            .collect();
        sort_entries(&mut entries);
        Ok(RankedList {
            query_id,
            entries,
            system_tag: system_tag.into(),
        })
    }

    /// The first `k` doc ids.
    pub fn top_k_ids(&self, k: usize) -> Vec<&str> {
        self.entries
            .iter()
            .take(k)
            .map(|e| e.doc_id.as_str())
            .collect()
    }

    pub fn score_of(&self, doc_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.doc_id == doc_id)
            .map(|e| e.score)
    }

    /// Truncate to at most `k` entries.
    pub fn truncated(&self, k: usize) -> RankedList {
        RankedList {
            query_id: self.query_id.clone(),
            entries: self.entries.iter().take(k).cloned().collect(),
            system_tag: self.system_tag.clone(),
        }
    }
}

/// Score descending, then doc id ascending. The canonical run order.
pub(crate) fn sort_entries(entries: &mut [RunEntry]) {
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores validated finite")
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}

/// Source of a training triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripleSource {
    Public,
    Hq,
    Eq,
    Vl,
    Rq,
}

/// A contrastive training example: query, one positive, optional hard negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingTriple {
    pub query: String,
    pub positive: String,
    pub hard_negatives: Vec<String>,
    pub source: TripleSource,
}

/// A loaded corpus with unique, validated documents.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub docs: Vec<Document>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for d in &docs {
            if d.id.is_empty() {
                return Err(CorpusError::Validation("empty document id".into()));
            }
            if d.text.is_empty() {
                return Err(CorpusError::Validation(format!(
                    "document {:?} has empty text",
                    d.id
                )));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(CorpusError::Validation(format!(
                    "duplicate document id {:?}",
                    d.id
                )));
            }
        }
        Ok(Corpus { docs })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.docs.iter().find(|d| d.id == doc_id)
    }

    /// doc id -> body text map, for stages that look documents up by id.
    pub fn text_map(&self) -> BTreeMap<&str, &str> {
        self.docs
            .iter()
            .map(|d| (d.id.as_str(), d.text.as_str()))
            .collect()
    }
}

/// Load a JSONL corpus: one object per line with keys `id`, `text`, optional
/// `title`. Duplicate ids are rejected with the offending line number.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut docs = Vec::new();
    let mut first_line: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(line)
            .map_err(|e| CorpusError::parse(path, lineno, e.to_string()))?;
        if doc.id.is_empty() {
            return Err(CorpusError::parse(path, lineno, "empty document id"));
        }
        if doc.text.is_empty() {
            return Err(CorpusError::parse(path, lineno, "empty document text"));
        }
        if first_line.contains_key(&doc.id) {
            return Err(CorpusError::DuplicateId {
                path: path.display().to_string(),
                line: lineno,
                id: doc.id,
            });
        }
        first_line.insert(doc.id.clone(), lineno);
        docs.push(doc);
    }
    Corpus::new(docs)
}

/// Load JSONL queries: `id`, `text`, optional `variant` (default `original`)
/// and `parent_id`. Rewritten and decomposed queries must name a parent.
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>, CorpusError> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut queries = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let q: Query = serde_json::from_str(line)
            .map_err(|e| CorpusError::parse(path, lineno, e.to_string()))?;
        if matches!(
            q.variant,
            QueryVariant::Rewritten | QueryVariant::DecomposedSub
        ) && q.parent_id.is_none()
        {
            return Err(CorpusError::parse(
                path,
                lineno,
                format!("query {:?} is derived but has no parent_id", q.id),
            ));
        }
        queries.push(q);
    }
    Ok(queries)
}

pub fn write_queries(queries: &[Query], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = String::new();
    for q in queries {
        out.push_str(&serde_json::to_string(q).expect("query serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CorpusError::io(path, e))
}

/// Load qrels lines of the form `qid 0 docid grade` (whitespace separated).
pub fn load_qrels(path: impl AsRef<Path>) -> Result<Judgments, CorpusError> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut judgments = Judgments::new();
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(CorpusError::parse(
                path,
                lineno,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let grade: i64 = fields[3].parse().map_err(|_| {
            CorpusError::parse(path, lineno, format!("non-integer grade {:?}", fields[3]))
        })?;
        if grade < 0 {
            return Err(CorpusError::parse(
                path,
                lineno,
                format!("negative grade {grade}"),
            ));
        }
        judgments.insert(fields[0], fields[2], grade as u32);
    }
    Ok(judgments)
}

pub fn write_qrels(judgments: &Judgments, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = String::new();
    for qid in judgments.query_ids() {
        for (doc_id, grade) in judgments.for_query(qid).expect("listed query exists") {
            writeln!(out, "{qid} 0 {doc_id} {grade}").expect("string write");
        }
    }
    fs::write(path, out).map_err(|e| CorpusError::io(path, e))
}

/// Result of [`load_run`]: the parsed lists plus any non-fatal warnings.
#[derive(Debug)]
pub struct RunLoad {
    pub lists: Vec<RankedList>,
    pub warnings: Vec<String>,
}

/// Load a 6-column TREC run file (`qid Q0 docid rank score tag`).
///
/// Entries are re-sorted by score; a warning is recorded when the file's rank
/// column disagrees with the score ordering.
pub fn load_run(path: impl AsRef<Path>) -> Result<RunLoad, CorpusError> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    // query id -> (file order, tag, entries in file order)
    let mut per_query: BTreeMap<String, (usize, String, Vec<RunEntry>)> = BTreeMap::new();
    let mut order = 0usize;
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(CorpusError::parse(
                path,
                lineno,
                format!("expected 6 fields, got {}", fields.len()),
            ));
        }
        let score: f64 = fields[4].parse().map_err(|_| {
            CorpusError::parse(path, lineno, format!("non-numeric score {:?}", fields[4]))
        })?;
        if !score.is_finite() {
            return Err(CorpusError::parse(path, lineno, "non-finite score"));
        }
        let entry = RunEntry {
            doc_id: fields[2].to_string(),
            score,
        };
        let slot = per_query.entry(fields[0].to_string()).or_insert_with(|| {
            order += 1;
            (order, fields[5].to_string(), Vec::new())
        });
        if slot.2.iter().any(|e| e.doc_id == entry.doc_id) {
            return Err(CorpusError::parse(
                path,
                lineno,
                format!("duplicate doc id {:?} for query {:?}", fields[2], fields[0]),
            ));
        }
        slot.2.push(entry);
    }

    let mut with_order: Vec<(usize, String, String, Vec<RunEntry>)> = per_query
        .into_iter()
        .map(|(qid, (ord, tag, entries))| (ord, qid, tag, entries))
        .collect();
    with_order.sort_by_key(|(ord, ..)| *ord);

    let mut warnings = Vec::new();
    let mut lists = Vec::new();
    for (_, query_id, system_tag, file_entries) in with_order {
        let mut entries = file_entries.clone();
        sort_entries(&mut entries);
        let file_ids: Vec<&str> = file_entries.iter().map(|e| e.doc_id.as_str()).collect();
        let sorted_ids: Vec<&str> = entries.iter().map(|e| e.doc_id.as_str()).collect();
        if file_ids != sorted_ids {
            warnings.push(format!(
                "query {query_id:?}: rank column inconsistent with scores; re-sorted"
            ));
        }
        lists.push(RankedList {
            query_id,
            entries,
            system_tag,
        });
    }
    Ok(RunLoad { lists, warnings })
}

/// Write lists as a TREC run file with ranks from 1 and 6-decimal scores.
pub fn write_run(lists: &[RankedList], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, format_run(lists)?).map_err(|e| CorpusError::io(path, e))
}

pub fn format_run(lists: &[RankedList]) -> Result<String, CorpusError> {
    let mut out = String::new();
    for list in lists {
        for field in [&list.query_id, &list.system_tag] {
            if field.is_empty() || field.chars().any(char::is_whitespace) {
                return Err(CorpusError::Validation(format!(
                    "run field {field:?} must be non-empty and whitespace-free"
                )));
            }
        }
        for (rank, entry) in list.entries.iter().enumerate() {
            if entry.doc_id.is_empty() || entry.doc_id.chars().any(char::is_whitespace) {
                return Err(CorpusError::Validation(format!(
                    "doc id {:?} not writable in run format",
                    entry.doc_id
                )));
            }
            writeln!(
                out,
                "{} Q0 {} {} {:.6} {}",
                list.query_id,
                entry.doc_id,
                rank + 1,
                entry.score,
                list.system_tag
            )
            .expect("string write");
        }
    }
    Ok(out)
}

/// Load training triples from JSONL
/// (`{"query", "positive", "hard_negatives": [...], "source"}`).
pub fn load_triples(path: impl AsRef<Path>) -> Result<Vec<TrainingTriple>, CorpusError> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut triples = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let t: TrainingTriple = serde_json::from_str(line)
            .map_err(|e| CorpusError::parse(path, lineno, e.to_string()))?;
        if t.positive.is_empty() {
            return Err(CorpusError::parse(path, lineno, "empty positive document"));
        }
        triples.push(t);
    }
    Ok(triples)
}

pub fn write_triples(triples: &[TrainingTriple], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, format_triples(triples)).map_err(|e| CorpusError::io(path, e))
}

pub fn format_triples(triples: &[TrainingTriple]) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&serde_json::to_string(t).expect("triple serializes"));
        out.push('\n');
    }
    out
}

/// Unicode-lowercase the text and split it on runs of non-alphanumeric
/// characters, dropping empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn temp_file(contents: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_corpus_minimal() {
        let f = temp_file("{\"id\":\"a\",\"text\":\"alpha\"}\n{\"id\":\"b\",\"text\":\"beta\"}\n");
        let corpus = load_corpus(f.path()).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.docs[0].id, "a");
        assert_eq!(corpus.docs[1].text, "beta");
    }

    #[test]
    fn load_corpus_missing_text_names_line() {
        let f = temp_file("{\"id\":\"a\"}\n");
        let err = load_corpus(f.path()).unwrap_err();
        match err {
            CorpusError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_corpus_duplicate_id_cites_later_line() {
        let f = temp_file(
            "{\"id\":\"a\",\"text\":\"one\"}\n{\"id\":\"b\",\"text\":\"two\"}\n{\"id\":\"a\",\"text\":\"three\"}\n",
        );
        let err = load_corpus(f.path()).unwrap_err();
        match err {
            CorpusError::DuplicateId { line, id, .. } => {
                assert_eq!(line, 3);
                assert_eq!(id, "a");
            }
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn qrels_roundtrip() {
        let f = temp_file("q1 0 d1 2\nq1 0 d2 0\nq2 0 d3 1\n");
        let j = load_qrels(f.path()).unwrap();
        assert_eq!(j.grade("q1", "d1"), 2);
        assert_eq!(j.grade("q1", "d2"), 0);
        assert_eq!(j.grade("q1", "missing"), 0);
        assert_eq!(j.relevant_docs("q1").len(), 1);
    }

    #[test]
    fn qrels_non_integer_grade() {
        let f = temp_file("q1 0 d1 high\n");
        assert!(matches!(
            load_qrels(f.path()),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn run_roundtrip_is_identity() {
        let list = RankedList::from_scores(
            "q1",
            "sys",
            vec![
                ("d2".into(), 0.25),
                ("d1".into(), 1.5),
                ("d3".into(), -0.5),
            ],
        )
        .unwrap();
        let f = NamedTempFile::new().unwrap();
        write_run(&[list.clone()], f.path()).unwrap();
        let loaded = load_run(f.path()).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.lists, vec![list]);
    }

    #[test]
    fn run_with_inconsistent_rank_is_resorted_with_warning() {
        let f = temp_file("q1 Q0 d1 1 0.100000 sys\nq1 Q0 d2 2 0.900000 sys\n");
        let loaded = load_run(f.path()).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        let ids: Vec<&str> = loaded.lists[0].entries.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["d2", "d1"]);
    }

    #[test]
    fn run_non_numeric_score_errors() {
        let f = temp_file("q1 Q0 d1 1 high sys\n");
        assert!(matches!(
            load_run(f.path()),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn ranked_list_rejects_duplicates() {
        let err = RankedList::from_scores(
            "q",
            "t",
            vec![("d".into(), 1.0), ("d".into(), 0.5)],
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::Validation(_)));
    }

    #[test]
    fn ranked_list_tie_order_is_doc_id_ascending() {
        let list = RankedList::from_scores(
            "q",
            "t",
            vec![("b".into(), 1.0), ("a".into(), 1.0), ("c".into(), 2.0)],
        )
        .unwrap();
        let ids: Vec<&str> = list.entries.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["c", "a", "b"]);
    }

    #[test]
    fn tokenize_rules() {
        assert_eq!(tokenize("Cone cells, CONES!"), vec!["cone", "cells", "cones"]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("x1-y2"), vec!["x1", "y2"]);
    }

    #[test]
    fn tokenize_idempotent_on_joined_output() {
        for text in ["Mixed CASE, with-punct!", "ünïcode Straße 42", "a  b\tc"] {
            let once = tokenize(text);
            let twice = tokenize(&once.join(" "));
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn triples_roundtrip() {
        let triples = vec![TrainingTriple {
            query: "q".into(),
            positive: "p".into(),
            hard_negatives: vec!["n1".into(), "n2".into()],
            source: TripleSource::Hq,
        }];
        let f = NamedTempFile::new().unwrap();
        write_triples(&triples, f.path()).unwrap();
        assert_eq!(load_triples(f.path()).unwrap(), triples);
    }

    #[test]
    fn derived_query_requires_parent() {
        let f = temp_file("{\"id\":\"r1\",\"text\":\"t\",\"variant\":\"rewritten\"}\n");
        assert!(load_queries(f.path()).is_err());
        let f = temp_file(
            "{\"id\":\"r1\",\"text\":\"t\",\"variant\":\"rewritten\",\"parent_id\":\"q1\"}\n",
        );
        assert_eq!(load_queries(f.path()).unwrap()[0].parent_id.as_deref(), Some("q1"));
    }
}
