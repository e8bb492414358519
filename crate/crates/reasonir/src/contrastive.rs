//! InfoNCE over cosine similarities with hard and in-batch negatives,
//! analytic gradients checked against finite differences, and a small
//! linear-encoder trainer.
//!
//! Per query the loss is the negative log-softmax of the positive among
//! the positive, the query's own hard negatives, and (optionally) the
//! other queries' positives. Logits are `cos/τ` by default; the literal
//! `τ·cos` reading is selectable as [`TauMode::MultiplyLiteral`] and makes
//! logits nearly flat at τ=0.02, which the tests demonstrate.
//!
//! Losses are computed as `ln(1 + Σ exp(z_c − z_pos))`, shifted by the
//! positive's logit rather than the max, so near-zero losses keep full
//! relative precision instead of cancelling to 0.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::fallback_embed;

/// Minibatch size used by [`train_linear_encoder`].
pub const TRAIN_BATCH_SIZE: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum ContrastiveError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch shape invalid: {0}")]
    Shape(String),
    #[error("{role} vector {index} is zero; cosine is undefined")]
    ZeroVector { role: &'static str, index: usize },
    #[error("{role} vector {index} has a non-finite component")]
    NonFinite { role: &'static str, index: usize },
    #[error("temperature must be positive, got {tau}")]
    BadTau { tau: f64 },
    #[error("loss became non-finite at epoch {epoch}; try a smaller learning rate")]
    Diverged { epoch: usize },
}

/// Where the temperature sits in the logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    /// `cos/τ`: the standard sharpened softmax.
    #[default]
    Divide,
    /// `τ·cos` taken literally: at τ=0.02 the softmax is nearly uniform
    /// regardless of the scores.
    MultiplyLiteral,
}

/// Temperature and negative-sampling switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    pub tau_mode: TauMode,
    /// Add the other queries' positives to each denominator.
    pub include_in_batch: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 0.02,
            tau_mode: TauMode::Divide,
            include_in_batch: true,
        }
    }
}

impl LossConfig {
    fn validate(&self) -> Result<(), ContrastiveError> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(ContrastiveError::BadTau { tau: self.tau });
        }
        Ok(())
    }

    fn logit_scale(&self) -> f64 {
        match self.tau_mode {
            TauMode::Divide => 1.0 / self.tau,
            TauMode::MultiplyLiteral => self.tau,
        }
    }
}

/// Aligned queries, positives, and per-query hard negative lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub queries: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub hard_negatives: Vec<Vec<Vec<f64>>>,
}

impl Batch {
    pub fn new(
        queries: Vec<Vec<f64>>,
        positives: Vec<Vec<f64>>,
        hard_negatives: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self, ContrastiveError> {
        let batch = Batch {
            queries,
            positives,
            hard_negatives,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    fn validate(&self) -> Result<(), ContrastiveError> {
        if self.queries.is_empty() {
            return Err(ContrastiveError::EmptyBatch);
        }
        if self.positives.len() != self.queries.len()
            || self.hard_negatives.len() != self.queries.len()
        {
            return Err(ContrastiveError::Shape(format!(
                "{} queries, {} positives, {} hard-negative lists",
                self.queries.len(),
                self.positives.len(),
                self.hard_negatives.len()
            )));
        }
        let dim = self.queries[0].len();
        let mut check = |role: &'static str, index: usize, v: &[f64]| {
            if v.len() != dim {
                return Err(ContrastiveError::Shape(format!(
                    "{role} vector {index} has dim {}, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ContrastiveError::NonFinite { role, index });
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(ContrastiveError::ZeroVector { role, index });
            }
            Ok(())
        };
        for (i, q) in self.queries.iter().enumerate() {
            check("query", i, q)?;
        }
        for (i, p) in self.positives.iter().enumerate() {
            check("positive", i, p)?;
        }
        for (i, negs) in self.hard_negatives.iter().enumerate() {
            for n in negs {
                check("hard negative", i, n)?;
            }
        }
        Ok(())
    }
}

/// Gradients aligned with the batch layout.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub queries: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub hard_negatives: Vec<Vec<Vec<f64>>>,
}

impl Gradients {
    fn zeros_like(batch: &Batch) -> Self {
        Gradients {
            queries: batch.queries.iter().map(|v| vec![0.0; v.len()]).collect(),
            positives: batch.positives.iter().map(|v| vec![0.0; v.len()]).collect(),
            hard_negatives: batch
                .hard_negatives
                .iter()
                .map(|negs| negs.iter().map(|v| vec![0.0; v.len()]).collect())
                .collect(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

/// Candidate index layout for query `i`: positive, own hard negatives, then
/// the other queries' positives in batch order.
fn candidate_vectors<'a>(batch: &'a Batch, i: usize, config: &LossConfig) -> Vec<&'a [f64]> {
    let mut vectors: Vec<&[f64]> = Vec::with_capacity(1 + batch.hard_negatives[i].len());
    vectors.push(&batch.positives[i]);
    for neg in &batch.hard_negatives[i] {
        vectors.push(neg);
    }
    if config.include_in_batch {
        for (j, pos) in batch.positives.iter().enumerate() {
            if j != i {
                vectors.push(pos);
            }
        }
    }
    vectors
}

fn query_logits(batch: &Batch, i: usize, config: &LossConfig) -> Vec<f64> {
    let scale = config.logit_scale();
    candidate_vectors(batch, i, config)
        .iter()
        .map(|v| scale * cosine(&batch.queries[i], v))
        .collect()
}

/// Loss of one query given its logits, with the positive at index 0:
/// `ln(1 + Σ_{c>0} exp(z_c − z_0))`, max-shifted only when some negative
/// outscores the positive.
fn loss_from_logits(logits: &[f64]) -> f64 {
    let z_pos = logits[0];
    let diffs: Vec<f64> = logits[1..].iter().map(|z| z - z_pos).collect();
    let peak = diffs.iter().fold(0.0f64, |m, &d| m.max(d));
    if peak <= 0.0 {
        diffs.iter().map(|d| d.exp()).sum::<f64>().ln_1p()
    } else {
        let shifted: f64 = (-peak).exp() + diffs.iter().map(|d| (d - peak).exp()).sum::<f64>();
        peak + shifted.ln()
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let peak = logits.iter().fold(f64::NEG_INFINITY, |m, &z| m.max(z));
    let exps: Vec<f64> = logits.iter().map(|z| (z - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean and per-query InfoNCE loss over the batch.
pub fn info_nce(batch: &Batch, config: &LossConfig) -> Result<(f64, Vec<f64>), ContrastiveError> {
    config.validate()?;
    batch.validate()?;
    let per_query: Vec<f64> = (0..batch.len())
        .map(|i| loss_from_logits(&query_logits(batch, i, config)))
        .collect();
    let mean = per_query.iter().sum::<f64>() / per_query.len() as f64;
    Ok((mean, per_query))
}

fn add_scaled(target: &mut [f64], source: &[f64], scale: f64) {
    for (t, s) in target.iter_mut().zip(source) {
        *t += scale * s;
    }
}

/// Accumulate `coeff · ∂cos(u, v)/∂u` into `grad_u` and the symmetric term
/// into `grad_v`.
fn accumulate_cosine_grad(
    u: &[f64],
    v: &[f64],
    coeff: f64,
    grad_u: &mut [f64],
    grad_v: &mut [f64],
) {
    let nu = norm(u);
    let nv = norm(v);
    let cos = dot(u, v) / (nu * nv);
    add_scaled(grad_u, v, coeff / (nu * nv));
    add_scaled(grad_u, u, -coeff * cos / (nu * nu));
    add_scaled(grad_v, u, coeff / (nu * nv));
    add_scaled(grad_v, v, -coeff * cos / (nv * nv));
}

/// Analytic gradient of the mean batch loss with respect to every input
/// vector, including the cosine normalization terms. In-batch positives
/// accumulate contributions from every query that saw them.
pub fn info_nce_grad(batch: &Batch, config: &LossConfig) -> Result<Gradients, ContrastiveError> {
    config.validate()?;
    batch.validate()?;
    let scale = config.logit_scale();
    let inv_batch = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros_like(batch);
    for i in 0..batch.len() {
        let logits = query_logits(batch, i, config);
        let probs = softmax(&logits);
        let negs = batch.hard_negatives[i].len();
        for (c, &p) in probs.iter().enumerate() {
            let coeff = (p - if c == 0 { 1.0 } else { 0.0 }) * scale * inv_batch;
            // Split the borrows: the query gradient and the candidate
            // gradient live in different fields of `grads`.
            let mut grad_q = std::mem::take(&mut grads.queries[i]);
            let (candidate, grad_candidate): (&[f64], &mut Vec<f64>) = if c == 0 {
                (&batch.positives[i], &mut grads.positives[i])
            } else if c <= negs {
                (
                    &batch.hard_negatives[i][c - 1],
                    &mut grads.hard_negatives[i][c - 1],
                )
            } else {
                // In-batch slot c-1-negs counts the other queries in order.
                let mut j = c - 1 - negs;
                if j >= i {
                    j += 1;
                }
                (&batch.positives[j], &mut grads.positives[j])
            };
            accumulate_cosine_grad(
                &batch.queries[i],
                candidate,
                coeff,
                &mut grad_q,
                grad_candidate,
            );
            grads.queries[i] = grad_q;
        }
    }
    Ok(grads)
}

/// One training example already mapped to vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTriple {
    pub query: Vec<f64>,
    pub positive: Vec<f64>,
    pub hard_negatives: Vec<Vec<f64>>,
}

/// Map text triples to vectors with the deterministic fallback embedder.
pub fn vectorize_triples(
    triples: &[crate::corpus::TrainingTriple],
    dim: usize,
    seed: u64,
) -> Result<Vec<VectorTriple>, crate::dense::DenseError> {
    let mut out = Vec::with_capacity(triples.len());
    for triple in triples {
        let mut texts: Vec<&str> = vec![&triple.query, &triple.positive];
        texts.extend(triple.hard_negatives.iter().map(|n| n.as_str()));
        let rows = fallback_embed(&texts, dim, seed)?;
        let mut rows = rows.into_iter().map(to_f64);
        let query_vec = rows.next().expect("query row");
        let positive_vec = rows.next().expect("positive row");
        out.push(VectorTriple {
            query: query_vec,
            positive: positive_vec,
            hard_negatives: rows.collect(),
        });
    }
    Ok(out)
}

fn to_f64(v: Vec<f32>) -> Vec<f64> {
    v.into_iter().map(f64::from).collect()
}

/// Row-major square projection applied to both queries and documents.
pub type Matrix = Vec<Vec<f64>>;

pub fn identity_matrix(dim: usize) -> Matrix {
    (0..dim)
        .map(|r| (0..dim).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn apply_matrix(w: &Matrix, v: &[f64]) -> Vec<f64> {
    w.iter().map(|row| dot(row, v)).collect()
}

/// Trained projection plus the epoch-mean loss curve.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub matrix: Matrix,
    pub loss_curve: Vec<f64>,
}

fn batch_from_mapped(w: &Matrix, triples: &[&VectorTriple]) -> Result<Batch, ContrastiveError> {
    Batch::new(
        triples.iter().map(|t| apply_matrix(w, &t.query)).collect(),
        triples.iter().map(|t| apply_matrix(w, &t.positive)).collect(),
        triples
            .iter()
            .map(|t| t.hard_negatives.iter().map(|n| apply_matrix(w, n)).collect())
            .collect(),
    )
}

/// Train a square linear map by minibatch gradient descent from identity
/// initialization. The map is applied to queries, positives, and negatives
/// alike before the cosine. Returns the matrix and epoch-mean losses; a
/// non-finite loss aborts with advice to lower the learning rate.
pub fn train_linear_encoder(
    triples: &[VectorTriple],
    config: &LossConfig,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<TrainOutcome, ContrastiveError> {
    config.validate()?;
    if triples.is_empty() {
        return Err(ContrastiveError::EmptyBatch);
    }
    let dim = triples[0].query.len();
    let mut w = identity_matrix(dim);
    let mut curve = Vec::with_capacity(epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(TRAIN_BATCH_SIZE) {
            let members: Vec<&VectorTriple> = chunk.iter().map(|&i| &triples[i]).collect();
            let batch = batch_from_mapped(&w, &members)?;
            let (loss, _) = info_nce(&batch, config)?;
            if !loss.is_finite() {
                return Err(ContrastiveError::Diverged { epoch });
            }
            let grads = info_nce_grad(&batch, config)?;
            let mut dw = vec![vec![0.0; dim]; dim];
            let mut add_outer = |mapped_grad: &[f64], raw: &[f64]| {
                for (r, &g) in mapped_grad.iter().enumerate() {
                    add_scaled(&mut dw[r], raw, g);
                }
            };
            for (k, triple) in members.iter().enumerate() {
                add_outer(&grads.queries[k], &triple.query);
                add_outer(&grads.positives[k], &triple.positive);
                for (n, neg) in triple.hard_negatives.iter().enumerate() {
                    add_outer(&grads.hard_negatives[k][n], neg);
                }
            }
            for (w_row, dw_row) in w.iter_mut().zip(&dw) {
                add_scaled(w_row, dw_row, -lr);
            }
            if w.iter().flatten().any(|x| !x.is_finite()) {
                return Err(ContrastiveError::Diverged { epoch });
            }
            epoch_loss += loss;
            batches += 1;
        }
        curve.push(epoch_loss / batches as f64);
    }
    Ok(TrainOutcome {
        matrix: w,
        loss_curve: curve,
    })
}

/// Fraction of queries whose own positive strictly outscores every other
/// candidate (its hard negatives plus all other positives) after projection.
pub fn accuracy_at_1(w: &Matrix, triples: &[VectorTriple]) -> f64 {
    if triples.is_empty() {
        return 0.0;
    }
    let mapped_positives: Vec<Vec<f64>> = triples
        .iter()
        .map(|t| apply_matrix(w, &t.positive))
        .collect();
    let correct = triples
        .iter()
        .enumerate()
        .filter(|(i, triple)| {
            let query = apply_matrix(w, &triple.query);
            let own = cosine(&query, &mapped_positives[*i]);
            let beaten_by_negative = triple
                .hard_negatives
                .iter()
                .any(|n| cosine(&query, &apply_matrix(w, n)) >= own);
            let beaten_by_positive = mapped_positives
                .iter()
                .enumerate()
                .any(|(j, p)| j != *i && cosine(&query, p) >= own);
            !beaten_by_negative && !beaten_by_positive
        })
        .count();
    correct as f64 / triples.len() as f64
}

/// Loss curve as CSV with an `epoch,loss` header; epochs are 1-based.
pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, loss) in curve.iter().enumerate() {
        out.push_str(&format!("{},{loss:.6}\n", i + 1));
    }
    out
}
