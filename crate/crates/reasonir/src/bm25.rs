//! Okapi BM25 over an in-memory inverted index.
//!
//! Scores use the Lucene-style idf `ln(1 + (N - df + 0.5) / (df + 0.5))`,
//! which is never negative, so downstream min-max fusion sees a sane range.
//! Indexes serialize to a little-endian binary format (magic `RIRX1`) whose
//! bytes are a deterministic function of the corpus and parameters.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::binfmt::{push_str, push_u32, Reader};
use crate::corpus::{tokenize, Corpus, CorpusError, RankedList};
use crate::{RetrieveError, Retriever};

const MAGIC: &[u8; 5] = b"RIRX1";

#[derive(Debug, thiserror::Error)]
pub enum Bm25Error {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("corpus tokenizes to zero tokens")]
    NoTokens,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad index file {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// BM25 free parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Inverse document frequency of a term seen in `df` of `n_docs` documents.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Term-frequency saturation component of the score for one document.
pub fn term_weight(tf: u32, doc_len: u32, avgdl: f64, params: Bm25Params) -> f64 {
    let tf = tf as f64;
    let norm = if avgdl > 0.0 {
        doc_len as f64 / avgdl
    } else {
        0.0
    };
    tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * norm))
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Posting {
    doc: u32,
    tf: u32,
}

/// A BM25 index: term postings plus per-document lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    params: Bm25Params,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<Posting>>,
    avgdl: f64,
}

impl InvertedIndex {
    /// Tokenize and index every document in the corpus.
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self, Bm25Error> {
        if corpus.is_empty() {
            return Err(Bm25Error::EmptyCorpus);
        }
        let mut doc_ids = Vec::with_capacity(corpus.len());
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (ordinal, doc) in corpus.docs.iter().enumerate() {
            let tokens = tokenize(&doc.text);
            doc_ids.push(doc.id.clone());
            doc_lengths.push(tokens.len() as u32);
            let mut tfs: BTreeMap<String, u32> = BTreeMap::new();
            for token in tokens {
                *tfs.entry(token).or_insert(0) += 1;
            }
            for (term, tf) in tfs {
                postings.entry(term).or_default().push(Posting {
                    doc: ordinal as u32,
                    tf,
                });
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        if total == 0 {
            return Err(Bm25Error::NoTokens);
        }
        let avgdl = total as f64 / doc_lengths.len() as f64;
        Ok(InvertedIndex {
            params,
            doc_ids,
            doc_lengths,
            postings,
            avgdl,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    /// Documents containing the term.
    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// Score all documents against the query and keep the top `k`.
    ///
    /// Documents sharing no term with the query are omitted; an empty query
    /// yields an empty list. Repeated query terms contribute once per
    /// occurrence.
    pub fn search(&self, query_text: &str, k: usize) -> Result<RankedList, Bm25Error> {
        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        for term in tokenize(query_text) {
            let Some(postings) = self.postings.get(&term) else {
                continue;
            };
            let idf = idf(self.doc_count(), postings.len());
            for p in postings {
                let w = term_weight(p.tf, self.doc_lengths[p.doc as usize], self.avgdl, self.params);
                *scores.entry(p.doc).or_insert(0.0) += idf * w;
            }
        }
        let pairs: Vec<(String, f64)> = scores
            .into_iter()
            .map(|(doc, score)| (self.doc_ids[doc as usize].clone(), score))
            .collect();
        let list = RankedList::from_scores("", "bm25", pairs)?;
        Ok(list.truncated(k))
    }

    /// Score one (query, document) pair using this index's collection
    /// statistics. The document does not need to be indexed.
    pub fn score_pair(&self, query_text: &str, doc_text: &str) -> f64 {
        let doc_tokens = tokenize(doc_text);
        let doc_len = doc_tokens.len() as u32;
        let mut tfs: BTreeMap<&str, u32> = BTreeMap::new();
        for t in &doc_tokens {
            *tfs.entry(t.as_str()).or_insert(0) += 1;
        }
        let mut score = 0.0;
        for term in tokenize(query_text) {
            let Some(&tf) = tfs.get(term.as_str()) else {
                continue;
            };
            let df = self.df(&term);
            if df == 0 {
                continue;
            }
            score += idf(self.doc_count(), df) * term_weight(tf, doc_len, self.avgdl, self.params);
        }
        score
    }

    /// Serialize to the `RIRX1` little-endian binary layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        push_u32(&mut out, self.doc_ids.len() as u32);
        push_u32(&mut out, self.postings.len() as u32);
        for (term, postings) in &self.postings {
            push_str(&mut out, term);
            push_u32(&mut out, postings.len() as u32);
            for p in postings {
                push_u32(&mut out, p.doc);
                push_u32(&mut out, p.tf);
            }
        }
        for &len in &self.doc_lengths {
            push_u32(&mut out, len);
        }
        for id in &self.doc_ids {
            push_str(&mut out, id);
        }
        out.extend_from_slice(&self.params.k1.to_le_bytes());
        out.extend_from_slice(&self.params.b.to_le_bytes());
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), Bm25Error> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Bm25Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Parse the `RIRX1` layout; the average document length is recomputed.
    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self, Bm25Error> {
        Self::parse(bytes).map_err(|message| Bm25Error::Format {
            path: origin.to_string(),
            message,
        })
    }

    fn parse(bytes: &[u8]) -> Result<Self, String> {
        let mut cur = Reader::new(bytes);
        if cur.take(MAGIC.len())? != MAGIC {
            return Err("wrong magic".to_string());
        }
        let doc_count = cur.u32()? as usize;
        let term_count = cur.u32()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..term_count {
            let term = cur.string()?;
            let n = cur.u32()? as usize;
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let doc = cur.u32()?;
                let tf = cur.u32()?;
                if doc as usize >= doc_count {
                    return Err("posting references unknown document".to_string());
                }
                list.push(Posting { doc, tf });
            }
            if postings.insert(term, list).is_some() {
                return Err("duplicate term record".to_string());
            }
        }
        let mut doc_lengths = Vec::with_capacity(doc_count);
        for _ in 0..doc_count {
            doc_lengths.push(cur.u32()?);
        }
        let mut doc_ids = Vec::with_capacity(doc_count);
        for _ in 0..doc_count {
            doc_ids.push(cur.string()?);
        }
        let k1 = cur.f64()?;
        let b = cur.f64()?;
        cur.expect_end()?;
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        if doc_count == 0 || total == 0 {
            return Err("index has no indexed tokens".to_string());
        }
        let avgdl = total as f64 / doc_count as f64;
        Ok(InvertedIndex {
            params: Bm25Params { k1, b },
            doc_ids,
            doc_lengths,
            postings,
            avgdl,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Bm25Error> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Bm25Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

/// A BM25 index searching under a fixed system tag with per-query ids filled
/// in by the caller.
pub struct Bm25Retriever {
    pub index: InvertedIndex,
}

impl Retriever for Bm25Retriever {
    fn search(&self, query_text: &str, k: usize) -> Result<RankedList, RetrieveError> {
        self.index
            .search(query_text, k)
            .map_err(|e| RetrieveError::Other(e.to_string()))
    }
}
