//! Exact dense retrieval over precomputed embeddings.
//!
//! Scoring is an exhaustive cosine scan: every document is scored against the
//! query vector in double precision and the top `k` survive. Embeddings are
//! stored as 32-bit floats, L2-normalized at build time, and serialize to a
//! little-endian binary format (magic `RIRE1`). A deterministic seeded
//! projection provider ([`fallback_embed`]) makes the whole path usable
//! offline.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binfmt::{push_f32, push_str, push_u32, Reader};
use crate::corpus::{tokenize, Corpus, CorpusError, RankedList};
use crate::gateway::GatewayError;
use crate::{RetrieveError, Retriever};

const MAGIC: &[u8; 5] = b"RIRE1";

/// Smallest accepted fallback projection dimension.
pub const MIN_FALLBACK_DIM: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding provider {provider:?} failed")]
    Gateway {
        provider: String,
        #[source]
        source: GatewayError,
    },
    #[error("provider returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("inconsistent embedding dimension: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector {index} has zero magnitude and cannot be normalized")]
    ZeroVector { index: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum DenseError {
    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("cosine is undefined for a zero-magnitude vector")]
    ZeroMagnitude,
    #[error("projection dimension must be at least {MIN_FALLBACK_DIM}, got {dim}")]
    DimTooSmall { dim: usize },
    #[error("embedding matrix is empty")]
    EmptyMatrix,
    #[error("query dimension {got} does not match matrix dimension {expected}")]
    QueryDim { expected: usize, got: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad embedding file {path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Cosine similarity of two equal-length vectors, accumulated in f64.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, DenseError> {
    if u.len() != v.len() {
        return Err(DenseError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(DenseError::ZeroMagnitude);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Anything that can embed a batch of texts into fixed-dimension vectors.
///
/// Implementations must be deterministic for a fixed configuration.
pub trait EmbeddingProvider {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError>;
    fn name(&self) -> &str;
}

/// Document embeddings plus their ids, one row per document.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    doc_ids: Vec<String>,
    rows: Vec<Vec<f32>>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Assemble a matrix from raw provider output. With `normalize` set, each
    /// row is rescaled to unit L2 norm (in f64) before f32 storage.
    pub fn from_rows(
        doc_ids: Vec<String>,
        mut rows: Vec<Vec<f32>>,
        normalize: bool,
    ) -> Result<Self, DenseError> {
        if doc_ids.len() != rows.len() {
            return Err(EmbedError::CountMismatch {
                expected: doc_ids.len(),
                got: rows.len(),
            }
            .into());
        }
        if rows.is_empty() {
            return Err(DenseError::EmptyMatrix);
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(EmbedError::DimensionMismatch {
                expected: 1,
                got: 0,
            }
            .into());
        }
        let mut seen = std::collections::HashSet::new();
        for id in &doc_ids {
            if !seen.insert(id.as_str()) {
                return Err(CorpusError::Validation(format!(
                    "duplicate document id {id:?} in embedding matrix"
                ))
                .into());
            }
        }
        for (index, row) in rows.iter_mut().enumerate() {
            if row.len() != dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                }
                .into());
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(CorpusError::Validation(format!(
                    "non-finite embedding component in row {index}"
                ))
                .into());
            }
            if normalize {
                let norm = l2(row);
                if norm == 0.0 {
                    return Err(EmbedError::ZeroVector { index }.into());
                }
                for x in row.iter_mut() {
                    *x = (*x as f64 / norm) as f32;
                }
            }
        }
        Ok(EmbeddingMatrix {
            dim,
            doc_ids,
            rows,
            normalized: normalize,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Whether every row is stored with unit L2 norm.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i]
    }

    /// Serialize to the `RIRE1` little-endian binary layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        push_u32(&mut out, self.dim as u32);
        push_u32(&mut out, self.rows.len() as u32);
        for row in &self.rows {
            for &x in row {
                push_f32(&mut out, x);
            }
        }
        for id in &self.doc_ids {
            push_str(&mut out, id);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DenseError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| DenseError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Parse the `RIRE1` layout. The normalized flag is recovered by checking
    /// that every row's L2 norm is within 1e-6 of 1.
    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self, DenseError> {
        Self::parse(bytes).map_err(|message| DenseError::Format {
            path: origin.to_string(),
            message,
        })
    }

    fn parse(bytes: &[u8]) -> Result<Self, String> {
        let mut cur = Reader::new(bytes);
        if cur.take(MAGIC.len())? != MAGIC {
            return Err("wrong magic".to_string());
        }
        let dim = cur.u32()? as usize;
        let count = cur.u32()? as usize;
        if dim == 0 || count == 0 {
            return Err("empty matrix".to_string());
        }
        let mut rows = Vec::with_capacity(count);
        for _ in 0..count {
            let mut row = Vec::with_capacity(dim);
            for _ in 0..dim {
                let x = cur.f32()?;
                if !x.is_finite() {
                    return Err("non-finite embedding component".to_string());
                }
                row.push(x);
            }
            rows.push(row);
        }
        let mut doc_ids = Vec::with_capacity(count);
        for _ in 0..count {
            doc_ids.push(cur.string()?);
        }
        cur.expect_end()?;
        let normalized = rows.iter().all(|r| (l2(r) - 1.0).abs() <= 1e-6);
        let mut matrix =
            EmbeddingMatrix::from_rows(doc_ids, rows, false).map_err(|e| e.to_string())?;
        matrix.normalized = normalized;
        Ok(matrix)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DenseError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| DenseError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

fn l2(row: &[f32]) -> f64 {
    row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Embed every document and store the vectors unit-normalized.
pub fn embed_corpus(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
) -> Result<EmbeddingMatrix, DenseError> {
    if corpus.is_empty() {
        return Err(DenseError::EmptyMatrix);
    }
    let texts: Vec<&str> = corpus.docs.iter().map(|d| d.text.as_str()).collect();
    let rows = provider.embed(&texts)?;
    if rows.len() != texts.len() {
        return Err(EmbedError::CountMismatch {
            expected: texts.len(),
            got: rows.len(),
        }
        .into());
    }
    let ids = corpus.docs.iter().map(|d| d.id.clone()).collect();
    EmbeddingMatrix::from_rows(ids, rows, true)
}

/// Score every document against the query vector and keep the top `k`.
///
/// Scores are exact cosines computed in f64, so results match a brute-force
/// scan bit for bit; ties fall back to doc-id order.
pub fn dense_search(
    matrix: &EmbeddingMatrix,
    query: &[f32],
    k: usize,
) -> Result<RankedList, DenseError> {
    if matrix.is_empty() {
        return Err(DenseError::EmptyMatrix);
    }
    if query.len() != matrix.dim {
        return Err(DenseError::QueryDim {
            expected: matrix.dim,
            got: query.len(),
        });
    }
    let q: Vec<f64> = query.iter().map(|&x| x as f64).collect();
    let mut pairs = Vec::with_capacity(matrix.len());
    for (i, row) in matrix.rows.iter().enumerate() {
        let r: Vec<f64> = row.iter().map(|&x| x as f64).collect();
        let score = cosine(&q, &r)?;
        pairs.push((matrix.doc_ids[i].clone(), score));
    }
    let list = RankedList::from_scores("", "dense", pairs)?;
    Ok(list.truncated(k))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1_0000_0000_01b3);
    }
    h
}

fn project_one(text: &str, dim: usize, seed: u64) -> Vec<f32> {
    let tokens = tokenize(text);
    let mut acc = vec![0.0f64; dim];
    // A text with no tokens projects as a single empty pseudo-token so the
    // result is still a deterministic unit vector.
    let effective: Vec<String> = if tokens.is_empty() {
        vec![String::new()]
    } else {
        tokens
    };
    for token in &effective {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ seed);
        for slot in acc.iter_mut() {
            *slot += rng.gen_range(-1.0f64..1.0);
        }
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        acc[0] = 1.0;
        return acc.iter().map(|&x| x as f32).collect();
    }
    acc.iter().map(|&x| (x / norm) as f32).collect()
}

/// Deterministic offline embeddings: each token is hashed to a seeded signed
/// pseudo-random vector, the token vectors are summed (bag of words), and the
/// sum is L2-normalized.
pub fn fallback_embed(texts: &[&str], dim: usize, seed: u64) -> Result<Vec<Vec<f32>>, DenseError> {
    if dim < MIN_FALLBACK_DIM {
        return Err(DenseError::DimTooSmall { dim });
    }
    Ok(texts.iter().map(|t| project_one(t, dim, seed)).collect())
}

/// [`EmbeddingProvider`] backed by [`fallback_embed`].
#[derive(Debug, Clone, Copy)]
pub struct FallbackProvider {
    dim: usize,
    seed: u64,
}

impl FallbackProvider {
    pub fn new(dim: usize, seed: u64) -> Result<Self, DenseError> {
        if dim < MIN_FALLBACK_DIM {
            return Err(DenseError::DimTooSmall { dim });
        }
        Ok(FallbackProvider { dim, seed })
    }
}

impl EmbeddingProvider for FallbackProvider {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts
            .iter()
            .map(|t| project_one(t, self.dim, self.seed))
            .collect())
    }

    fn name(&self) -> &str {
        "fallback"
    }
}

/// Embeds the query with a provider and scans an [`EmbeddingMatrix`].
pub struct DenseRetriever {
    pub matrix: EmbeddingMatrix,
    pub provider: Box<dyn EmbeddingProvider + Send + Sync>,
}

impl Retriever for DenseRetriever {
    fn search(&self, query_text: &str, k: usize) -> Result<RankedList, RetrieveError> {
        let mut vecs = self.provider.embed(&[query_text])?;
        let query = vecs.pop().ok_or(EmbedError::CountMismatch {
            expected: 1,
            got: 0,
        })?;
        dense_search(&self.matrix, &query, k).map_err(|e| RetrieveError::Other(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_hand_values() {
        assert!((cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap().abs() < 1e-15);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatch() {
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(DenseError::ZeroMagnitude)
        ));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(DenseError::LengthMismatch { .. })
        ));
    }

    fn unit_rows(dim: usize) -> Vec<Vec<f32>> {
        (0..3)
            .map(|i| {
                let mut row = vec![0.0f32; dim];
                row[i] = 1.0;
                row
            })
            .collect()
    }

    #[test]
    fn orthonormal_docs_rank_by_alignment() {
        let ids = vec!["d1".to_string(), "d2".to_string(), "d3".to_string()];
        let matrix = EmbeddingMatrix::from_rows(ids, unit_rows(8), true).unwrap();
        let mut query = vec![0.0f32; 8];
        query[0] = 1.0;
        let list = dense_search(&matrix, &query, 3).unwrap();
        assert_eq!(list.entries[0].doc_id, "d1");
        assert!((list.entries[0].score - 1.0).abs() < 1e-12);

        let anti: Vec<f32> = query.iter().map(|x| -x).collect();
        let list = dense_search(&matrix, &anti, 3).unwrap();
        assert_eq!(list.entries.last().unwrap().doc_id, "d1");
        assert!((list.entries.last().unwrap().score + 1.0).abs() < 1e-12);
    }

    #[test]
    fn search_matches_brute_force_oracle_seed_7() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dim = 16;
        let rows: Vec<Vec<f32>> = (0..10)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect();
        let ids: Vec<String> = (0..10).map(|i| format!("doc{i:02}")).collect();
        let matrix = EmbeddingMatrix::from_rows(ids.clone(), rows, true).unwrap();
        let query: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();

        let mut expected: Vec<(String, f64)> = (0..matrix.len())
            .map(|i| {
                let r: Vec<f64> = matrix.row(i).iter().map(|&x| x as f64).collect();
                let q: Vec<f64> = query.iter().map(|&x| x as f64).collect();
                (ids[i].clone(), cosine(&q, &r).unwrap())
            })
            .collect();
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

        let got = dense_search(&matrix, &query, 10).unwrap();
        for (entry, (id, score)) in got.entries.iter().zip(&expected) {
            assert_eq!(&entry.doc_id, id);
            assert!((entry.score - score).abs() < 1e-12);
        }
    }

    #[test]
    fn query_dim_mismatch_is_rejected() {
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let matrix = EmbeddingMatrix::from_rows(ids, unit_rows(8), true).unwrap();
        assert!(matches!(
            dense_search(&matrix, &[1.0f32; 4], 3),
            Err(DenseError::QueryDim { expected: 8, got: 4 })
        ));
    }

    #[test]
    fn fallback_is_deterministic_and_seed_sensitive() {
        let a = fallback_embed(&["the cat sat"], 32, 1).unwrap();
        let b = fallback_embed(&["the cat sat"], 32, 1).unwrap();
        assert_eq!(a, b);
        let c = fallback_embed(&["the cat sat"], 32, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fallback_is_bag_of_words() {
        let a = fallback_embed(&["alpha beta gamma"], 32, 9).unwrap();
        let b = fallback_embed(&["gamma ALPHA beta!"], 32, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fallback_disjoint_tokens_are_near_orthogonal() {
        let left = "ocelot quasar brine fjord lattice";
        let right = "monsoon ratchet velvet koan sprocket";
        let mut violations = 0;
        for seed in 0..100u64 {
            let vecs = fallback_embed(&[left, right], 256, seed).unwrap();
            let a: Vec<f64> = vecs[0].iter().map(|&x| x as f64).collect();
            let b: Vec<f64> = vecs[1].iter().map(|&x| x as f64).collect();
            if cosine(&a, &b).unwrap().abs() >= 0.3 {
                violations += 1;
            }
        }
        assert!(violations <= 3, "{violations} of 100 seeds exceeded 0.3");
    }

    #[test]
    fn fallback_rejects_tiny_dim() {
        assert!(matches!(
            fallback_embed(&["x"], 4, 0),
            Err(DenseError::DimTooSmall { dim: 4 })
        ));
    }

    #[test]
    fn fallback_handles_tokenless_text() {
        let vecs = fallback_embed(&["", "?!»"], 16, 3).unwrap();
        assert_eq!(vecs[0], vecs[1]);
        let norm = l2(&vecs[0]);
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rire_roundtrip() {
        let provider = FallbackProvider::new(16, 42).unwrap();
        let texts = ["alpha beta", "gamma delta", "epsilon"];
        let rows = provider.embed(&texts).unwrap();
        let ids = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let matrix = EmbeddingMatrix::from_rows(ids, rows, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.rire");
        matrix.save(&path).unwrap();
        let loaded = EmbeddingMatrix::load(&path).unwrap();
        assert_eq!(loaded, matrix);
        assert!(loaded.is_normalized());
    }

    #[test]
    fn rire_rejects_bad_magic_and_truncation() {
        let matrix = EmbeddingMatrix::from_rows(
            vec!["a".to_string()],
            vec![vec![1.0f32; 8]],
            true,
        )
        .unwrap();
        let mut bytes = matrix.to_bytes();
        bytes[0] = b'Z';
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes, "test"),
            Err(DenseError::Format { .. })
        ));
        let bytes = matrix.to_bytes();
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bytes[..bytes.len() - 2], "test"),
            Err(DenseError::Format { .. })
        ));
    }

    #[test]
    fn unnormalized_file_loads_with_flag_clear() {
        let matrix = EmbeddingMatrix::from_rows(
            vec!["a".to_string(), "b".to_string()],
            vec![vec![3.0f32, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], vec![0.0f32, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]],
            false,
        )
        .unwrap();
        let loaded = EmbeddingMatrix::from_bytes(&matrix.to_bytes(), "test").unwrap();
        assert!(!loaded.is_normalized());
        let list = dense_search(&loaded, &[1.0f32, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert!((list.entries[0].score - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-7);
    }

    #[test]
    fn equal_rows_tie_break_by_doc_id() {
        let row = vec![1.0f32, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let matrix = EmbeddingMatrix::from_rows(
            vec!["zz".to_string(), "aa".to_string()],
            vec![row.clone(), row.clone()],
            true,
        )
        .unwrap();
        let list = dense_search(&matrix, &row, 2).unwrap();
        assert_eq!(list.entries[0].doc_id, "aa");
        assert_eq!(list.entries[1].doc_id, "zz");
    }

    proptest! {
        /// Rescaling one vector by a positive constant leaves cosine unchanged.
        #[test]
        fn cosine_scale_invariant(
            v in proptest::collection::vec(-100.0f64..100.0, 2..16),
            w_seed in 0u64..1000,
            c in 1e-3f64..1e3,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(w_seed);
            let w: Vec<f64> = (0..v.len()).map(|_| rng.gen_range(-100.0f64..100.0)).collect();
            prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
            prop_assume!(w.iter().any(|x| x.abs() > 1e-6));
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let base = cosine(&v, &w).unwrap();
            let after = cosine(&scaled, &w).unwrap();
            prop_assert!((base - after).abs() < 1e-9);
        }

        /// Exhaustive scan agrees with an independent brute-force scorer.
        #[test]
        fn search_agrees_with_brute_force(n in 1usize..40, dim_step in 0usize..4, qseed in 0u64..500) {
            let dim = 8 + dim_step * 4;
            let mut rng = ChaCha8Rng::seed_from_u64(qseed);
            let rows: Vec<Vec<f32>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
                .collect();
            prop_assume!(rows.iter().all(|r| r.iter().any(|&x| x != 0.0)));
            let ids: Vec<String> = (0..n).map(|i| format!("d{i:03}")).collect();
            let matrix = EmbeddingMatrix::from_rows(ids.clone(), rows, true).unwrap();
            let query: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            prop_assume!(query.iter().any(|&x| x != 0.0));

            let q: Vec<f64> = query.iter().map(|&x| x as f64).collect();
            let mut expected: Vec<(String, f64)> = (0..matrix.len())
                .map(|i| {
                    let r: Vec<f64> = matrix.row(i).iter().map(|&x| x as f64).collect();
                    (ids[i].clone(), cosine(&q, &r).unwrap())
                })
                .collect();
            expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

            let got = dense_search(&matrix, &query, n).unwrap();
            prop_assert_eq!(got.entries.len(), expected.len());
            for (entry, (id, score)) in got.entries.iter().zip(&expected) {
                prop_assert_eq!(&entry.doc_id, id);
                prop_assert!((entry.score - score).abs() < 1e-12);
            }
        }
    }
}
