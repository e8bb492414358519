//! Test-time compute model for bi-encoder retrievers versus cross-encoder
//! rerankers.
//!
//! A bi-encoder embeds only the query at query time, costing `2·N·L_q`
//! FLOPs for a model with N non-embedding parameters. A pointwise reranker
//! runs the full model over every candidate with the query, document, and
//! generated verdict in context: `2·N·k·(L_q + L_d + L_o)` FLOPs. Attention
//! makes the gap worse in time: retriever latency grows as `L_q²` while the
//! reranker pays `k·((L_q+L_d)² + (L_q+L_d)·L_o + L_o²)`. Similarity search
//! over the datastore is excluded on both sides.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CostError {
    #[error("model {name:?}: parameter count must be positive and finite, got {n_params}")]
    InvalidProfile { name: String, n_params: f64 },
    #[error("reranker costs need at least one candidate")]
    NoCandidates,
}

/// A model sized by its non-embedding parameter count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub n_params: f64,
}

impl ModelProfile {
    pub fn new(name: impl Into<String>, n_params: f64) -> Result<Self, CostError> {
        let profile = ModelProfile {
            name: name.into(),
            n_params,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.n_params > 0.0 && self.n_params.is_finite()) {
            return Err(CostError::InvalidProfile {
                name: self.name.clone(),
                n_params: self.n_params,
            });
        }
        Ok(())
    }
}

/// Token counts and candidate depth for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub query_tokens: u64,
    pub doc_tokens: u64,
    pub output_tokens: u64,
    pub rerank_candidates: u64,
}

/// The comparison workload: short queries, 300-token documents and verdicts,
/// 100 candidates per query.
pub fn default_workload() -> WorkloadProfile {
    WorkloadProfile {
        query_tokens: 128,
        doc_tokens: 300,
        output_tokens: 300,
        rerank_candidates: 100,
    }
}

/// Query length after reasoning-style rewriting, which runs about 8x longer
/// than the raw query.
pub const REWRITTEN_QUERY_TOKENS: u64 = 1024;

/// The three models compared: a 7B bi-encoder against 7B and 32B pointwise
/// rerankers.
pub fn default_profiles() -> Vec<ModelProfile> {
    vec![
        ModelProfile {
            name: "ReasonIR".into(),
            n_params: 7.0e9,
        },
        ModelProfile {
            name: "Rank1-7B".into(),
            n_params: 6.5e9,
        },
        ModelProfile {
            name: "Rank1-32B".into(),
            n_params: 31e9,
        },
    ]
}

/// Query-time FLOPs for a bi-encoder: `2·N·L_q`.
pub fn retriever_flops(profile: &ModelProfile, workload: &WorkloadProfile) -> f64 {
    2.0 * profile.n_params * workload.query_tokens as f64
}

/// Query-time FLOPs for a pointwise reranker: `2·N·k·(L_q + L_d + L_o)`.
pub fn reranker_flops(profile: &ModelProfile, workload: &WorkloadProfile) -> f64 {
    let total_len = (workload.query_tokens + workload.doc_tokens + workload.output_tokens) as f64;
    2.0 * profile.n_params * workload.rerank_candidates as f64 * total_len
}

/// Attention time for embedding the query alone: `L_q²`.
pub fn retriever_time_units(workload: &WorkloadProfile) -> f64 {
    let lq = workload.query_tokens as f64;
    lq * lq
}

/// Attention time for scoring every candidate:
/// `k·((L_q+L_d)² + (L_q+L_d)·L_o + L_o²)`.
pub fn reranker_time_units(workload: &WorkloadProfile) -> f64 {
    let prompt = (workload.query_tokens + workload.doc_tokens) as f64;
    let output = workload.output_tokens as f64;
    workload.rerank_candidates as f64 * (prompt * prompt + prompt * output + output * output)
}

/// How many times cheaper `a` is than `b`: `b / a`. Both must be positive.
pub fn speedup(a_flops: f64, b_flops: f64) -> f64 {
    b_flops / a_flops
}

/// Scientific notation with three decimals, e.g. `9.464e14`.
pub fn format_flops(flops: f64) -> String {
    format!("{flops:.3e}")
}

/// One line of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    pub model: String,
    pub retriever_flops: f64,
    pub reranker_flops: f64,
    pub retriever_time_units: f64,
    pub reranker_time_units: f64,
}

/// Per-model retriever and reranker costs under one workload.
pub fn cost_table(profiles: &[ModelProfile], workload: &WorkloadProfile) -> Vec<CostRow> {
    profiles
        .iter()
        .map(|profile| CostRow {
            model: profile.name.clone(),
            retriever_flops: retriever_flops(profile, workload),
            reranker_flops: reranker_flops(profile, workload),
            retriever_time_units: retriever_time_units(workload),
            reranker_time_units: reranker_time_units(workload),
        })
        .collect()
}

/// Config-file shape for the `cost` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostConfig {
    pub profiles: Vec<ModelProfile>,
    pub workload: WorkloadProfile,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            profiles: default_profiles(),
            workload: default_workload(),
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<(), CostError> {
        for profile in &self.profiles {
            profile.validate()?;
        }
        if self.workload.rerank_candidates == 0 {
            return Err(CostError::NoCandidates);
        }
        Ok(())
    }
}
