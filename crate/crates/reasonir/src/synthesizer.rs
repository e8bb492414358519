//! Synthetic training-data generation: seed filtering, hard and easy
//! document-to-query generation, varied-length (VL) query synthesis, a
//! second-turn hard-negative generator, rewritten-query training data, and
//! difficulty/length reports over the produced triples.
//!
//! Generation talks to the chat gateway, so every step works offline
//! against recorded fixtures and the whole pipeline is byte-deterministic
//! in replay mode. Model outputs wrap JSON unpredictably, so extraction
//! prefers a ```json fence and falls back to the first brace-balanced
//! object that parses. Soft prompt constraints (word counts, question
//! counts) produce warnings, never rejections; only missing keys and
//! negatives identical to their positive are hard failures.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::bm25::{Bm25Params, InvertedIndex};
use crate::corpus::{tokenize, Corpus, CorpusError, Document, TrainingTriple, TripleSource};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::prompts::{self, render, PromptError};
use crate::rewrite::{self, RewriteError, RewriteOptions};

/// Default chat model for generation calls.
pub const DEFAULT_SYNTH_MODEL: &str = "gpt-4o";

/// Documents scoring below this educational value are dropped as seeds.
pub const DEFAULT_SEED_THRESHOLD: f64 = 2.0;

/// Additional attempts when a hard negative fails to parse or duplicates
/// its positive.
pub const DEFAULT_NEGATIVE_RETRIES: u32 = 2;

/// Hard negatives are asked for at least this many words.
pub const MIN_NEGATIVE_WORDS: usize = 300;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{stage}: {message}")]
    Parse { stage: &'static str, message: String },
    #[error("task brainstorm returned no tasks")]
    NoTasks,
    #[error("hard negative is identical to the positive document")]
    IdenticalNegative,
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn parse_error(stage: &'static str, message: impl Into<String>) -> SynthError {
    SynthError::Parse {
        stage,
        message: message.into(),
    }
}

/// Generation knobs shared by the synthesis calls.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Queries requested per seed document.
    pub num_questions: usize,
    pub negative_retries: u32,
    pub seed_threshold: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            model: DEFAULT_SYNTH_MODEL.to_string(),
            temperature: 0.7,
            max_tokens: 2048,
            num_questions: 2,
            negative_retries: DEFAULT_NEGATIVE_RETRIES,
            seed_threshold: DEFAULT_SEED_THRESHOLD,
        }
    }
}

impl SynthOptions {
    fn request(&self, system: Option<String>, user: String) -> ChatRequest {
        ChatRequest {
            system,
            messages: vec![ChatMessage::user(user)],
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            model: self.model.clone(),
        }
    }
}

/// Assigns an educational-value score in [0, 5] to a document.
pub trait DocumentScorer {
    fn name(&self) -> &str;
    fn score(&self, doc: &Document) -> Result<f64, SynthError>;
}

/// Deterministic offline scorer: rewards length (saturating at 200 tokens)
/// and vocabulary variety (distinct/total token ratio), scaled to [0, 5].
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicEducationalScorer;

impl DocumentScorer for HeuristicEducationalScorer {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn score(&self, doc: &Document) -> Result<f64, SynthError> {
        let tokens = tokenize(&doc.text);
        if tokens.is_empty() {
            return Ok(0.0);
        }
        let total = tokens.len() as f64;
        let distinct = tokens.iter().collect::<BTreeSet<_>>().len() as f64;
        let length_term = (total / 200.0).min(1.0);
        let variety_term = distinct / total;
        Ok(5.0 * (0.6 * length_term + 0.4 * variety_term))
    }
}

/// Asks a chat model for a 0-5 rating and parses the first number in the
/// reply.
pub struct RemoteEducationalScorer<'a> {
    gateway: &'a Gateway,
    model: String,
}

impl<'a> RemoteEducationalScorer<'a> {
    pub fn new(gateway: &'a Gateway, model: impl Into<String>) -> Self {
        RemoteEducationalScorer {
            gateway,
            model: model.into(),
        }
    }

    pub fn request_for(&self, doc: &Document) -> ChatRequest {
        ChatRequest {
            system: None,
            messages: vec![ChatMessage::user(format!(
                "Rate the educational value of the following document on a scale from 0 to 5. \
                 Respond with only the number.\n\n{}",
                doc.text
            ))],
            max_tokens: 8,
            temperature: 0.0,
            model: self.model.clone(),
        }
    }
}

impl DocumentScorer for RemoteEducationalScorer<'_> {
    fn name(&self) -> &str {
        "remote"
    }

    fn score(&self, doc: &Document) -> Result<f64, SynthError> {
        let reply = self.gateway.chat(&self.request_for(doc))?;
        let number = regex::Regex::new(r"\d+(?:\.\d+)?")
            .expect("valid regex")
            .find(&reply)
            .ok_or_else(|| parse_error("educational score", format!("no number in {reply:?}")))?;
        let value: f64 = number.as_str().parse().expect("digits parse");
        if !(0.0..=5.0).contains(&value) {
            return Err(parse_error(
                "educational score",
                format!("{value} outside 0..5"),
            ));
        }
        Ok(value)
    }
}

/// A seed document dropped during filtering, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSkip {
    pub doc_id: String,
    pub reason: String,
}

/// Surviving seeds plus skip diagnostics.
#[derive(Debug)]
pub struct FilterOutcome {
    pub kept: Vec<Document>,
    pub skipped: Vec<SeedSkip>,
    pub warning: Option<String>,
}

/// Keep documents whose educational score reaches the threshold; scorer
/// failures skip the document with a diagnostic instead of aborting.
pub fn filter_seeds(
    docs: &[Document],
    scorer: &dyn DocumentScorer,
    threshold: f64,
) -> FilterOutcome {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for doc in docs {
        match scorer.score(doc) {
            Ok(score) if score >= threshold => kept.push(doc.clone()),
            Ok(score) => skipped.push(SeedSkip {
                doc_id: doc.id.clone(),
                reason: format!("score {score:.3} below threshold {threshold}"),
            }),
            Err(e) => skipped.push(SeedSkip {
                doc_id: doc.id.clone(),
                reason: format!("scorer {} failed: {e}", scorer.name()),
            }),
        }
    }
    let warning = if kept.is_empty() && !docs.is_empty() {
        Some(format!(
            "no documents reached educational threshold {threshold}"
        ))
    } else {
        None
    };
    FilterOutcome {
        kept,
        skipped,
        warning,
    }
}

/// First ```json fenced block if present, else the first brace-balanced
/// substring that parses as a JSON object.
fn extract_json_object(text: &str) -> Result<serde_json::Value, String> {
    if let Some(fence_start) = text.find("```json") {
        let body = &text[fence_start + "```json".len()..];
        if let Some(fence_end) = body.find("```") {
            let candidate = body[..fence_end].trim();
            return serde_json::from_str(candidate)
                .map_err(|e| format!("fenced block is not valid JSON: {e}"));
        }
    }
    let bytes = text.as_bytes();
    let mut search_from = 0;
    while let Some(offset) = text[search_from..].find('{') {
        let start = search_from + offset;
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            match b {
                _ if escaped => escaped = false,
                b'\\' if in_string => escaped = true,
                b'"' => in_string = !in_string,
                b'{' if !in_string => depth += 1,
                b'}' if !in_string => {
                    depth -= 1;
                    if depth == 0 {
                        let candidate = &text[start..=i];
                        if let Ok(value) = serde_json::from_str::<serde_json::Value>(candidate) {
                            if value.is_object() {
                                return Ok(value);
                            }
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
        search_from = start + 1;
    }
    Err("no JSON object found in response".to_string())
}

fn string_array(value: &serde_json::Value, key: &str) -> Result<Vec<String>, String> {
    let array = value
        .get(key)
        .ok_or_else(|| format!("missing key {key:?}"))?
        .as_array()
        .ok_or_else(|| format!("key {key:?} is not an array"))?;
    array
        .iter()
        .map(|item| {
            item.as_str()
                .map(str::to_string)
                .ok_or_else(|| format!("key {key:?} contains a non-string element"))
        })
        .collect()
}

fn string_field(value: &serde_json::Value, key: &str) -> Result<String, String> {
    value
        .get(key)
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| format!("missing string key {key:?}"))
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Queries extracted from one generation call, with a warning when the
/// model returned a different count than requested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryGen {
    pub queries: Vec<String>,
    pub warning: Option<String>,
}

pub fn build_hq_request(
    options: &SynthOptions,
    doc: &Document,
    num_questions: usize,
) -> Result<ChatRequest, PromptError> {
    let count = num_questions.to_string();
    let system = render(prompts::HQ_SYSTEM, &[("num_questions", count.as_str())])?;
    let user = render(prompts::HQ_USER, &[("document", doc.text.as_str())])?;
    Ok(options.request(Some(system), user))
}

pub fn build_eq_request(
    options: &SynthOptions,
    doc: &Document,
    num_questions: usize,
) -> Result<ChatRequest, PromptError> {
    let count = num_questions.to_string();
    let system = render(prompts::EQ_SYSTEM, &[("num_questions", count.as_str())])?;
    let user = render(prompts::HQ_USER, &[("document", doc.text.as_str())])?;
    Ok(options.request(Some(system), user))
}

fn parse_query_gen(
    stage: &'static str,
    key: &str,
    reply: &str,
    num_questions: usize,
) -> Result<QueryGen, SynthError> {
    let value = extract_json_object(reply).map_err(|m| parse_error(stage, m))?;
    let queries = string_array(&value, key).map_err(|m| parse_error(stage, m))?;
    let warning = (queries.len() != num_questions).then(|| {
        format!(
            "asked for {num_questions} queries but the model returned {}",
            queries.len()
        )
    });
    Ok(QueryGen { queries, warning })
}

/// Generate reasoning-intensive queries for a seed document; the reply must
/// carry a JSON object with key `hard_query`.
pub fn gen_hq(
    gateway: &Gateway,
    options: &SynthOptions,
    doc: &Document,
    num_questions: usize,
) -> Result<QueryGen, SynthError> {
    let reply = gateway.chat(&build_hq_request(options, doc, num_questions)?)?;
    parse_query_gen("hard query generation", "hard_query", &reply, num_questions)
}

/// Generate straightforward queries answered by the document; the reply
/// must carry a JSON object with key `questions`.
pub fn gen_eq(
    gateway: &Gateway,
    options: &SynthOptions,
    doc: &Document,
    num_questions: usize,
) -> Result<QueryGen, SynthError> {
    let reply = gateway.chat(&build_eq_request(options, doc, num_questions)?)?;
    parse_query_gen("easy query generation", "questions", &reply, num_questions)
}

pub fn build_vl_task_request(options: &SynthOptions) -> ChatRequest {
    options.request(None, prompts::VL_TASK_SYSTEM.to_string())
}

/// Parse a python-style list literal of strings, tolerating single or
/// double quotes and common escapes.
fn parse_string_list(text: &str) -> Result<Vec<String>, String> {
    let start = text.find('[').ok_or("no list literal in response")?;
    let chars: Vec<char> = text[start..].chars().collect();
    let mut items = Vec::new();
    let mut i = 1;
    loop {
        while i < chars.len() && (chars[i].is_whitespace() || chars[i] == ',') {
            i += 1;
        }
        if i >= chars.len() {
            return Err("unterminated list literal".to_string());
        }
        if chars[i] == ']' {
            return Ok(items);
        }
        let quote = chars[i];
        if quote != '"' && quote != '\'' {
            return Err(format!("list item does not start with a quote: {:?}", chars[i]));
        }
        i += 1;
        let mut item = String::new();
        loop {
            if i >= chars.len() {
                return Err("unterminated string in list".to_string());
            }
            match chars[i] {
                '\\' if i + 1 < chars.len() => {
                    let next = chars[i + 1];
                    item.push(match next {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                    i += 2;
                }
                c if c == quote => {
                    i += 1;
                    break;
                }
                c => {
                    item.push(c);
                    i += 1;
                }
            }
        }
        items.push(item);
    }
}

/// Brainstorm text-matching tasks whose queries are long documents.
pub fn gen_vl_tasks(gateway: &Gateway, options: &SynthOptions) -> Result<Vec<String>, SynthError> {
    let reply = gateway.chat(&build_vl_task_request(options))?;
    let tasks =
        parse_string_list(&reply).map_err(|m| parse_error("task brainstorm", m))?;
    if tasks.is_empty() {
        return Err(SynthError::NoTasks);
    }
    Ok(tasks)
}

/// Target query/document length for VL generation. The value is spliced
/// verbatim into the prompt's "at least {length} words" clause, so the
/// shortest bucket reads "at least below 300 words" exactly as issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LengthBucket {
    Below300,
    Words300,
    Words500,
    Words1000,
    Words1500,
    Words2000,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 6] = [
        LengthBucket::Below300,
        LengthBucket::Words300,
        LengthBucket::Words500,
        LengthBucket::Words1000,
        LengthBucket::Words1500,
        LengthBucket::Words2000,
    ];

    /// The text substituted into the prompt.
    pub fn literal(self) -> &'static str {
        match self {
            LengthBucket::Below300 => "below 300",
            LengthBucket::Words300 => "300",
            LengthBucket::Words500 => "500",
            LengthBucket::Words1000 => "1000",
            LengthBucket::Words1500 => "1500",
            LengthBucket::Words2000 => "2000",
        }
    }

    /// Word count under which a generated positive draws a warning.
    pub fn min_words(self) -> usize {
        match self {
            LengthBucket::Below300 => 0,
            LengthBucket::Words300 => 300,
            LengthBucket::Words500 => 500,
            LengthBucket::Words1000 => 1000,
            LengthBucket::Words1500 => 1500,
            LengthBucket::Words2000 => 2000,
        }
    }
}

impl std::str::FromStr for LengthBucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "below_300" | "below-300" | "below300" => Ok(LengthBucket::Below300),
            "300" => Ok(LengthBucket::Words300),
            "500" => Ok(LengthBucket::Words500),
            "1000" => Ok(LengthBucket::Words1000),
            "1500" => Ok(LengthBucket::Words1500),
            "2000" => Ok(LengthBucket::Words2000),
            other => Err(format!(
                "unknown length bucket {other:?} (below_300|300|500|1000|1500|2000)"
            )),
        }
    }
}

impl std::fmt::Display for LengthBucket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LengthBucket::Below300 => "below_300",
            LengthBucket::Words300 => "300",
            LengthBucket::Words500 => "500",
            LengthBucket::Words1000 => "1000",
            LengthBucket::Words1500 => "1500",
            LengthBucket::Words2000 => "2000",
        })
    }
}

pub fn build_vl_pair_request(
    options: &SynthOptions,
    task: &str,
    bucket: LengthBucket,
) -> Result<ChatRequest, PromptError> {
    let user = render(
        prompts::VL_DATA_SYSTEM,
        &[("instruction", task), ("length", bucket.literal())],
    )?;
    Ok(options.request(None, user))
}

/// A generated long query with its relevant document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VlPair {
    pub query: String,
    pub positive: String,
    pub warning: Option<String>,
}

/// Generate a (long query, positive document) example for one task and
/// length bucket. A positive shorter than the bucket asks for warns but is
/// kept.
pub fn gen_vl_pair(
    gateway: &Gateway,
    options: &SynthOptions,
    task: &str,
    bucket: LengthBucket,
) -> Result<VlPair, SynthError> {
    let reply = gateway.chat(&build_vl_pair_request(options, task, bucket)?)?;
    let value = extract_json_object(&reply).map_err(|m| parse_error("varied-length pair", m))?;
    let query = string_field(&value, "input").map_err(|m| parse_error("varied-length pair", m))?;
    let positive = string_field(&value, "positive_document")
        .map_err(|m| parse_error("varied-length pair", m))?;
    let words = word_count(&positive);
    let warning = (words < bucket.min_words()).then(|| {
        format!(
            "positive document has {words} words, bucket asked for at least {}",
            bucket.min_words()
        )
    });
    Ok(VlPair {
        query,
        positive,
        warning,
    })
}

pub fn build_negative_request(
    options: &SynthOptions,
    query: &str,
    positive: &str,
) -> Result<ChatRequest, PromptError> {
    let user = render(
        prompts::HARD_NEGATIVE,
        &[("query", query), ("positive_document", positive)],
    )?;
    Ok(options.request(None, user))
}

/// A generated hard negative, with a warning when it runs short of the 300
/// words the prompt asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardNegative {
    pub text: String,
    pub warning: Option<String>,
}

fn parse_negative(reply: &str, positive: &str) -> Result<HardNegative, SynthError> {
    let value = extract_json_object(reply).map_err(|m| parse_error("hard negative", m))?;
    let text = string_field(&value, "hard_negative_document")
        .map_err(|m| parse_error("hard negative", m))?;
    if text == positive {
        return Err(SynthError::IdenticalNegative);
    }
    let words = word_count(&text);
    let warning = (words < MIN_NEGATIVE_WORDS)
        .then(|| format!("hard negative has {words} words, template asks for at least {MIN_NEGATIVE_WORDS}"));
    Ok(HardNegative { text, warning })
}

/// Ask for a lexically overlapping but unhelpful document in a second turn.
/// Output identical to the positive is rejected.
pub fn gen_hard_negative(
    gateway: &Gateway,
    options: &SynthOptions,
    query: &str,
    positive: &str,
) -> Result<HardNegative, SynthError> {
    let reply = gateway.chat(&build_negative_request(options, query, positive)?)?;
    parse_negative(&reply, positive)
}

/// Retry rejected negatives up to `retries` extra times. Retrying only
/// helps against a live sampling provider; in replay the fixture repeats.
pub fn gen_hard_negative_with_retry(
    gateway: &Gateway,
    options: &SynthOptions,
    query: &str,
    positive: &str,
    retries: u32,
) -> Result<HardNegative, SynthError> {
    let mut last = gen_hard_negative(gateway, options, query, positive);
    for _ in 0..retries {
        match last {
            Ok(_) | Err(SynthError::Gateway(_)) => break,
            Err(_) => last = gen_hard_negative(gateway, options, query, positive),
        }
    }
    last
}

/// Rewritten-query training data: skipped entries carry the input index.
#[derive(Debug)]
pub struct RqOutcome {
    pub triples: Vec<TrainingTriple>,
    pub skipped: Vec<(usize, String)>,
}

/// Rewrite each triple's query while reusing its positive and hard
/// negatives unchanged; failed rewrites skip the triple with a diagnostic.
pub fn gen_rq_training(
    gateway: &Gateway,
    triples: &[TrainingTriple],
    options: &RewriteOptions,
) -> RqOutcome {
    let mut out = Vec::with_capacity(triples.len());
    let mut skipped = Vec::new();
    for (i, triple) in triples.iter().enumerate() {
        let query = crate::corpus::Query::original(format!("triple-{i}"), &triple.query);
        match rewrite::rewrite(gateway, &query, options) {
            Ok(rewritten) => out.push(TrainingTriple {
                query: rewritten.text,
                positive: triple.positive.clone(),
                hard_negatives: triple.hard_negatives.clone(),
                source: TripleSource::Rq,
            }),
            Err(e) => skipped.push((i, e.to_string())),
        }
    }
    RqOutcome {
        triples: out,
        skipped,
    }
}

/// Scores (query, document) pairs for difficulty analysis.
pub trait PairScorer {
    fn name(&self) -> &str;
    fn score_pair(&self, query: &str, doc: &str) -> f64;
}

/// Lexical baseline scorer backed by an index built over the triples' own
/// documents.
pub struct Bm25PairScorer {
    index: InvertedIndex,
}

impl Bm25PairScorer {
    /// Index every positive and hard negative so document statistics are
    /// available for pair scoring.
    pub fn from_triples(triples: &[TrainingTriple]) -> Result<Self, SynthError> {
        let mut docs = Vec::new();
        for (i, triple) in triples.iter().enumerate() {
            docs.push(Document {
                id: format!("pos-{i}"),
                title: None,
                text: triple.positive.clone(),
            });
            for (j, negative) in triple.hard_negatives.iter().enumerate() {
                docs.push(Document {
                    id: format!("neg-{i}-{j}"),
                    title: None,
                    text: negative.clone(),
                });
            }
        }
        let corpus = Corpus::new(docs)?;
        let index = InvertedIndex::build(&corpus, Bm25Params::default())
            .map_err(|e| parse_error("difficulty index", e.to_string()))?;
        Ok(Bm25PairScorer { index })
    }
}

impl PairScorer for Bm25PairScorer {
    fn name(&self) -> &str {
        "bm25"
    }

    fn score_pair(&self, query: &str, doc: &str) -> f64 {
        self.index.score_pair(query, doc)
    }
}

/// For each scorer, the fraction of (query, hard negative) pairs where the
/// negative outscores the positive. Ties are not errors. Triples without
/// hard negatives contribute no pairs.
pub fn difficulty_report(
    triples: &[TrainingTriple],
    scorers: &[&dyn PairScorer],
) -> BTreeMap<String, f64> {
    scorers
        .iter()
        .map(|scorer| {
            let mut pairs = 0usize;
            let mut errors = 0usize;
            for triple in triples {
                let positive_score = scorer.score_pair(&triple.query, &triple.positive);
                for negative in &triple.hard_negatives {
                    pairs += 1;
                    if scorer.score_pair(&triple.query, negative) > positive_score {
                        errors += 1;
                    }
                }
            }
            let rate = if pairs == 0 {
                0.0
            } else {
                errors as f64 / pairs as f64
            };
            (scorer.name().to_string(), rate)
        })
        .collect()
}

/// Histogram bucket boundaries for query token lengths; the last bucket is
/// unbounded.
const LENGTH_EDGES: [usize; 7] = [0, 64, 128, 256, 512, 1024, 2048];

/// Query-length distribution with bucketed counts and summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthReport {
    pub buckets: Vec<LengthBucketCount>,
    pub total: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthBucketCount {
    pub label: String,
    pub count: usize,
}

/// Bucket query token counts at edges 0/64/128/256/512/1024/2048.
pub fn length_report<F>(triples: &[TrainingTriple], tokenizer: F) -> LengthReport
where
    F: Fn(&str) -> Vec<String>,
{
    let mut lengths: Vec<usize> = triples
        .iter()
        .map(|t| tokenizer(&t.query).len())
        .collect();
    lengths.sort_unstable();
    let mut buckets: Vec<LengthBucketCount> = LENGTH_EDGES
        .iter()
        .enumerate()
        .map(|(i, &low)| {
            let label = match LENGTH_EDGES.get(i + 1) {
                Some(&high) => format!("{low}-{}", high - 1),
                None => format!("{low}+"),
            };
            LengthBucketCount { label, count: 0 }
        })
        .collect();
    for &len in &lengths {
        let slot = LENGTH_EDGES
            .iter()
            .rposition(|&edge| len >= edge)
            .expect("first edge is 0");
        buckets[slot].count += 1;
    }
    let total = lengths.len();
    let mean = (total > 0).then(|| lengths.iter().sum::<usize>() as f64 / total as f64);
    let median = (total > 0).then(|| {
        if total % 2 == 1 {
            lengths[total / 2] as f64
        } else {
            (lengths[total / 2 - 1] + lengths[total / 2]) as f64 / 2.0
        }
    });
    LengthReport {
        buckets,
        total,
        mean,
        median,
    }
}

/// Bucket counts as CSV with a `bucket,count` header.
pub fn length_report_csv(report: &LengthReport) -> String {
    let mut out = String::from("bucket,count\n");
    for bucket in &report.buckets {
        out.push_str(&format!("{},{}\n", bucket.label, bucket.count));
    }
    out
}

/// Triples produced by a pipeline run plus skip diagnostics and soft
/// warnings, all in input order.
#[derive(Debug, Default)]
pub struct PipelineOutcome {
    pub triples: Vec<TrainingTriple>,
    pub skipped: Vec<String>,
    pub warnings: Vec<String>,
}

/// Filter seeds, generate hard queries per surviving document, then a hard
/// negative per query. The seed document is each triple's positive. Query
/// generation runs as one concurrent batch, negatives as a second.
pub fn run_hq_pipeline(
    gateway: &Gateway,
    docs: &[Document],
    scorer: &dyn DocumentScorer,
    options: &SynthOptions,
) -> Result<PipelineOutcome, SynthError> {
    let mut outcome = PipelineOutcome::default();
    let filtered = filter_seeds(docs, scorer, options.seed_threshold);
    outcome.warnings.extend(filtered.warning.clone());
    for skip in &filtered.skipped {
        outcome
            .skipped
            .push(format!("seed {}: {}", skip.doc_id, skip.reason));
    }

    let requests: Vec<ChatRequest> = filtered
        .kept
        .iter()
        .map(|doc| build_hq_request(options, doc, options.num_questions))
        .collect::<Result<_, _>>()?;
    let replies = gateway.chat_many(&requests);

    let mut pending: Vec<(&Document, String)> = Vec::new();
    for (doc, reply) in filtered.kept.iter().zip(replies) {
        let parsed = reply.map_err(SynthError::from).and_then(|text| {
            parse_query_gen(
                "hard query generation",
                "hard_query",
                &text,
                options.num_questions,
            )
        });
        match parsed {
            Ok(gen) => {
                if let Some(w) = gen.warning {
                    outcome.warnings.push(format!("doc {}: {w}", doc.id));
                }
                pending.extend(gen.queries.into_iter().map(|q| (doc, q)));
            }
            Err(e) => outcome.skipped.push(format!("doc {}: {e}", doc.id)),
        }
    }

    let negative_requests: Vec<ChatRequest> = pending
        .iter()
        .map(|(doc, query)| build_negative_request(options, query, &doc.text))
        .collect::<Result<_, _>>()?;
    let negative_replies = gateway.chat_many(&negative_requests);
    for ((doc, query), reply) in pending.into_iter().zip(negative_replies) {
        let negative = match reply {
            Ok(text) => match parse_negative(&text, &doc.text) {
                Ok(n) => Ok(n),
                Err(SynthError::Gateway(e)) => Err(SynthError::Gateway(e)),
                Err(_) => gen_hard_negative_with_retry(
                    gateway,
                    options,
                    &query,
                    &doc.text,
                    options.negative_retries,
                ),
            },
            Err(e) => Err(e.into()),
        };
        match negative {
            Ok(negative) => {
                if let Some(w) = negative.warning {
                    outcome.warnings.push(format!("doc {}: {w}", doc.id));
                }
                outcome.triples.push(TrainingTriple {
                    query,
                    positive: doc.text.clone(),
                    hard_negatives: vec![negative.text],
                    source: TripleSource::Hq,
                });
            }
            Err(e) => outcome
                .skipped
                .push(format!("doc {} query {query:?}: {e}", doc.id)),
        }
    }
    Ok(outcome)
}

/// Like [`run_hq_pipeline`] but with the easy-query prompt and no hard
/// negatives; training relies on in-batch negatives for these.
pub fn run_eq_pipeline(
    gateway: &Gateway,
    docs: &[Document],
    scorer: &dyn DocumentScorer,
    options: &SynthOptions,
) -> Result<PipelineOutcome, SynthError> {
    let mut outcome = PipelineOutcome::default();
    let filtered = filter_seeds(docs, scorer, options.seed_threshold);
    outcome.warnings.extend(filtered.warning.clone());
    for skip in &filtered.skipped {
        outcome
            .skipped
            .push(format!("seed {}: {}", skip.doc_id, skip.reason));
    }
    let requests: Vec<ChatRequest> = filtered
        .kept
        .iter()
        .map(|doc| build_eq_request(options, doc, options.num_questions))
        .collect::<Result<_, _>>()?;
    let replies = gateway.chat_many(&requests);
    for (doc, reply) in filtered.kept.iter().zip(replies) {
        let parsed = reply.map_err(SynthError::from).and_then(|text| {
            parse_query_gen(
                "easy query generation",
                "questions",
                &text,
                options.num_questions,
            )
        });
        match parsed {
            Ok(gen) => {
                if let Some(w) = gen.warning {
                    outcome.warnings.push(format!("doc {}: {w}", doc.id));
                }
                for query in gen.queries {
                    outcome.triples.push(TrainingTriple {
                        query,
                        positive: doc.text.clone(),
                        hard_negatives: Vec::new(),
                        source: TripleSource::Eq,
                    });
                }
            }
            Err(e) => outcome.skipped.push(format!("doc {}: {e}", doc.id)),
        }
    }
    Ok(outcome)
}

/// Brainstorm tasks, then generate one (query, positive) pair and a hard
/// negative for each task and bucket combination, in task-major order.
pub fn run_vl_pipeline(
    gateway: &Gateway,
    options: &SynthOptions,
    buckets: &[LengthBucket],
    task_limit: Option<usize>,
) -> Result<PipelineOutcome, SynthError> {
    let mut outcome = PipelineOutcome::default();
    let mut tasks = gen_vl_tasks(gateway, options)?;
    if let Some(limit) = task_limit {
        tasks.truncate(limit);
    }

    let combos: Vec<(&str, LengthBucket)> = tasks
        .iter()
        .flat_map(|task| buckets.iter().map(move |&b| (task.as_str(), b)))
        .collect();
    let pair_requests: Vec<ChatRequest> = combos
        .iter()
        .map(|(task, bucket)| build_vl_pair_request(options, task, *bucket))
        .collect::<Result<_, _>>()?;
    let pair_replies = gateway.chat_many(&pair_requests);

    let mut pairs: Vec<(LengthBucket, VlPair)> = Vec::new();
    for ((task, bucket), reply) in combos.iter().zip(pair_replies) {
        let parsed = reply.map_err(SynthError::from).and_then(|text| {
            let value =
                extract_json_object(&text).map_err(|m| parse_error("varied-length pair", m))?;
            let query =
                string_field(&value, "input").map_err(|m| parse_error("varied-length pair", m))?;
            let positive = string_field(&value, "positive_document")
                .map_err(|m| parse_error("varied-length pair", m))?;
            Ok(VlPair {
                query,
                positive,
                warning: None,
            })
        });
        match parsed {
            Ok(pair) => {
                let words = word_count(&pair.positive);
                if words < bucket.min_words() {
                    outcome.warnings.push(format!(
                        "task {task:?} bucket {bucket}: positive has {words} words"
                    ));
                }
                pairs.push((*bucket, pair));
            }
            Err(e) => outcome
                .skipped
                .push(format!("task {task:?} bucket {bucket}: {e}")),
        }
    }

    let negative_requests: Vec<ChatRequest> = pairs
        .iter()
        .map(|(_, pair)| build_negative_request(options, &pair.query, &pair.positive))
        .collect::<Result<_, _>>()?;
    let negative_replies = gateway.chat_many(&negative_requests);
    for ((bucket, pair), reply) in pairs.into_iter().zip(negative_replies) {
        let negative = match reply {
            Ok(text) => match parse_negative(&text, &pair.positive) {
                Ok(n) => Ok(n),
                Err(SynthError::Gateway(e)) => Err(SynthError::Gateway(e)),
                Err(_) => gen_hard_negative_with_retry(
                    gateway,
                    options,
                    &pair.query,
                    &pair.positive,
                    options.negative_retries,
                ),
            },
            Err(e) => Err(e.into()),
        };
        match negative {
            Ok(negative) => {
                if let Some(w) = negative.warning {
                    outcome.warnings.push(format!("bucket {bucket}: {w}"));
                }
                outcome.triples.push(TrainingTriple {
                    query: pair.query,
                    positive: pair.positive,
                    hard_negatives: vec![negative.text],
                    source: TripleSource::Vl,
                });
            }
            Err(e) => outcome.skipped.push(format!("bucket {bucket}: {e}")),
        }
    }
    Ok(outcome)
}
