//! Domain schemas for models, hardware, traffic, and SLAs, plus JSON config
//! ingestion and validation shared by every other module.
//!
//! The config document is a single JSON object with named sections
//! (`model`, `hardware`, `traffic`, `sla`, and optional `search` / `sweep` /
//! `budget`). Unknown fields are rejected so sweep-script typos surface as
//! parse errors instead of silently ignored knobs. Token counts are
//! integers, seconds are decimal numbers, byte sizes may be fractional
//! (sub-byte precisions like FP4 yield 0.5 bytes per parameter).
//!
//! All values here are immutable after construction and safe to share across
//! worker threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default first-token-latency cutoff applied when the `sla` section omits
/// `ftl_cutoff`.
pub const DEFAULT_FTL_CUTOFF_SECS: f64 = 10.0;

/// Default bytes per stored KV element when the model section gives neither
/// `kv_element_bytes` nor an explicit `kv_bytes_per_token_per_layer`.
pub const DEFAULT_KV_ELEMENT_BYTES: f64 = 2.0;

const DEFAULT_ACTIVATION_BYTES: f64 = 2.0;
const DEFAULT_MAX_TOTAL_GPUS: u64 = 4096;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// The document does not match the schema (wrong type, unknown or
    /// missing field). The serde message names the offending field.
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    /// The document parsed but violates a domain invariant.
    #[error("invalid `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field,
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------------------
// Model architecture
// ---------------------------------------------------------------------------

/// Attention flavor. MLA stores a compressed per-token latent instead of
/// per-head K/V, so its KV footprint is governed by `latent_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AttentionKind {
    Gqa,
    Mla { latent_dim: u64 },
}

/// FFN flavor: dense MLP or mixture-of-experts with `top_k` routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FfnKind {
    Dense {
        inter_dim: u64,
    },
    Moe {
        num_experts: u64,
        top_k: u64,
        expert_inter_dim: u64,
    },
}

/// Transformer architecture description.
///
/// `kv_bytes_per_token_per_layer` is the single source of truth for every
/// KV-cache size, bandwidth, and memory formula in the crate. When derived
/// from the architecture it includes the K/V pair factor
/// (GQA: `2 * d_head * num_kv_heads * kv_element_bytes`; MLA:
/// `latent_dim * kv_element_bytes`), and it can be set explicitly in the
/// config to pin any other convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArch {
    pub name: String,
    pub num_layers: u64,
    pub hidden_dim: u64,
    pub num_q_heads: u64,
    pub d_head: u64,
    pub num_kv_heads: u64,
    pub attention: AttentionKind,
    pub ffn: FfnKind,
    pub vocab_size: u64,
    /// Bytes per weight parameter at storage precision (FP4 = 0.5).
    pub weight_bytes_per_param: f64,
    /// KV bytes appended per token per layer; see the type-level docs.
    pub kv_bytes_per_token_per_layer: f64,
    /// Bytes per activation element, used for collective volumes and
    /// activation hand-off sizes.
    pub activation_bytes: f64,
    /// When set, the output head shares the input embedding matrix and the
    /// embedding parameters are counted once instead of twice.
    pub tie_embeddings: bool,
}

/// Total and active (per-token) parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub total: u64,
    pub active: u64,
}

impl ModelArch {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_layers == 0 {
            return Err(invalid("num_layers", "must be > 0"));
        }
        if self.hidden_dim == 0 {
            return Err(invalid("hidden_dim", "must be > 0"));
        }
        if self.num_q_heads == 0 {
            return Err(invalid("num_q_heads", "must be > 0"));
        }
        if self.d_head == 0 {
            return Err(invalid("d_head", "must be > 0"));
        }
        if self.num_kv_heads == 0 {
            return Err(invalid("num_kv_heads", "must be > 0"));
        }
        if self.num_q_heads < self.num_kv_heads || self.num_q_heads % self.num_kv_heads != 0 {
            return Err(invalid(
                "num_kv_heads",
                format!(
                    "num_q_heads ({}) must be a positive multiple of num_kv_heads ({})",
                    self.num_q_heads, self.num_kv_heads
                ),
            ));
        }
        if self.vocab_size == 0 {
            return Err(invalid("vocab_size", "must be > 0"));
        }
        match self.attention {
            AttentionKind::Mla { latent_dim } if latent_dim == 0 => {
                return Err(invalid("attention.latent_dim", "must be > 0"));
            }
            _ => {}
        }
        match self.ffn {
            FfnKind::Dense { inter_dim } if inter_dim == 0 => {
                return Err(invalid("ffn.inter_dim", "must be > 0"));
            }
            FfnKind::Moe {
                num_experts,
                top_k,
                expert_inter_dim,
            } => {
                if num_experts == 0 {
                    return Err(invalid("ffn.num_experts", "must be > 0"));
                }
                if top_k == 0 || top_k > num_experts {
                    return Err(invalid(
                        "ffn.top_k",
                        format!("must be in 1..=num_experts ({num_experts})"),
                    ));
                }
                if expert_inter_dim == 0 {
                    return Err(invalid("ffn.expert_inter_dim", "must be > 0"));
                }
            }
            _ => {}
        }
        if !(self.weight_bytes_per_param > 0.0) {
            return Err(invalid("weight_bytes_per_param", "must be > 0"));
        }
        if !(self.kv_bytes_per_token_per_layer > 0.0) {
            return Err(invalid("kv_bytes_per_token_per_layer", "must be > 0"));
        }
        if !(self.activation_bytes > 0.0) {
            return Err(invalid("activation_bytes", "must be > 0"));
        }
        if self.param_count().total == 0 {
            return Err(invalid("model", "derived parameter count is zero"));
        }
        Ok(())
    }

    /// Per-layer attention parameter count.
    ///
    /// GQA: Q/K/V/O projections, `hidden * d_head * (2*Hq + 2*Hkv)`.
    /// MLA: KV down/up projections through the latent plus Q and O,
    /// `hidden*latent + latent*2*Hq*d + 2*hidden*Hq*d`.
    /// Norms and biases are ignored throughout.
    pub fn attn_params_per_layer(&self) -> u64 {
        let h = self.hidden_dim;
        let qd = self.num_q_heads * self.d_head;
        match self.attention {
            AttentionKind::Gqa => h * self.d_head * (2 * self.num_q_heads + 2 * self.num_kv_heads),
            AttentionKind::Mla { latent_dim } => {
                h * latent_dim + latent_dim * 2 * qd + 2 * h * qd
            }
        }
    }

    /// Per-layer FFN parameter count: gate/up/down projections (3 matrices)
    /// per expert, plus the router for MoE.
    pub fn ffn_params_per_layer(&self) -> u64 {
        match self.ffn {
            FfnKind::Dense { inter_dim } => 3 * self.hidden_dim * inter_dim,
            FfnKind::Moe {
                num_experts,
                expert_inter_dim,
                ..
            } => num_experts * 3 * self.hidden_dim * expert_inter_dim + self.hidden_dim * num_experts,
        }
    }

    /// FFN parameters touched per token (top-k experts plus router for MoE).
    pub fn ffn_active_params_per_layer(&self) -> u64 {
        match self.ffn {
            FfnKind::Dense { inter_dim } => 3 * self.hidden_dim * inter_dim,
            FfnKind::Moe {
                num_experts,
                top_k,
                expert_inter_dim,
            } => top_k * 3 * self.hidden_dim * expert_inter_dim + self.hidden_dim * num_experts,
        }
    }

    /// Embedding parameters: input table plus (untied) output head.
    pub fn embedding_params(&self) -> u64 {
        let one = self.vocab_size * self.hidden_dim;
        if self.tie_embeddings {
            one
        } else {
            2 * one
        }
    }

    /// Total and active parameter counts from the closed form above.
    pub fn param_count(&self) -> ParamCount {
        let per_layer_total = self.attn_params_per_layer() + self.ffn_params_per_layer();
        let per_layer_active = self.attn_params_per_layer() + self.ffn_active_params_per_layer();
        let emb = self.embedding_params();
        ParamCount {
            total: self.num_layers * per_layer_total + emb,
            active: self.num_layers * per_layer_active + emb,
        }
    }

    /// Total weight bytes at storage precision.
    pub fn weight_bytes_total(&self) -> f64 {
        self.param_count().total as f64 * self.weight_bytes_per_param
    }

    /// KV-cache bytes held for one request at the given sequence length:
    /// `num_layers * seq_len * kv_bytes_per_token_per_layer`.
    pub fn kv_bytes_per_request(&self, seq_len: u64) -> f64 {
        assert!(seq_len >= 1, "seq_len must be >= 1");
        self.num_layers as f64 * seq_len as f64 * self.kv_bytes_per_token_per_layer
    }

    /// Effective per-query score width used by the attention-flop model:
    /// `d_head` for GQA, the latent dimension for MLA (absorbed form).
    pub fn attn_score_width(&self) -> u64 {
        match self.attention {
            AttentionKind::Gqa => self.d_head,
            AttentionKind::Mla { latent_dim } => latent_dim,
        }
    }
}

/// Closed-form total/active parameter count for a model.
pub fn derived_param_count(model: &ModelArch) -> ParamCount {
    model.param_count()
}

/// KV-cache bytes one request of `seq_len` tokens occupies.
pub fn kv_bytes_per_request(model: &ModelArch, seq_len: u64) -> f64 {
    model.kv_bytes_per_request(seq_len)
}

// ---------------------------------------------------------------------------
// Hardware
// ---------------------------------------------------------------------------

/// GPU compute/memory/interconnect envelope. All rates are per GPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    /// Peak dense math throughput at compute precision, ops/second.
    pub flops_dense: f64,
    /// HBM bandwidth, bytes/second.
    pub hbm_bandwidth: f64,
    /// HBM capacity, bytes.
    pub hbm_capacity: f64,
    /// GPUs reachable over the fast intra-domain interconnect.
    pub nvlink_domain_size: u32,
    /// Intra-domain link bandwidth per GPU, bytes/second.
    pub nvlink_bw_per_gpu: f64,
    /// Inter-domain (scale-out) bandwidth per GPU, bytes/second; also the
    /// provisioned budget checked by the KV-transfer analysis.
    pub scaleout_bw_per_gpu: f64,
    /// Fixed overhead per collective step, seconds.
    pub per_message_latency: f64,
    /// Achievable fraction of peak math for large GEMMs, in (0, 1].
    pub compute_efficiency: f64,
}

impl HardwareSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("flops_dense", self.flops_dense),
            ("hbm_bandwidth", self.hbm_bandwidth),
            ("hbm_capacity", self.hbm_capacity),
            ("nvlink_bw_per_gpu", self.nvlink_bw_per_gpu),
            ("scaleout_bw_per_gpu", self.scaleout_bw_per_gpu),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(
                    match field {
                        "flops_dense" => "flops_dense",
                        "hbm_bandwidth" => "hbm_bandwidth",
                        "hbm_capacity" => "hbm_capacity",
                        "nvlink_bw_per_gpu" => "nvlink_bw_per_gpu",
                        _ => "scaleout_bw_per_gpu",
                    },
                    "must be > 0",
                ));
            }
        }
        if self.nvlink_domain_size < 1 {
            return Err(invalid("nvlink_domain_size", "must be >= 1"));
        }
        if !(self.per_message_latency >= 0.0) {
            return Err(invalid("per_message_latency", "must be >= 0"));
        }
        if !(self.compute_efficiency > 0.0 && self.compute_efficiency <= 1.0) {
            return Err(invalid("compute_efficiency", "must be in (0, 1]"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Traffic and SLA
// ---------------------------------------------------------------------------

/// One (isl, osl, weight) component of an empirical traffic mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSample {
    pub isl: u64,
    pub osl: u64,
    pub weight: f64,
}

/// ISL/OSL description: a fixed pair or a weighted empirical mixture.
/// `saturation` means offered load always fills the deployment (closed loop).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrafficPattern {
    Static {
        isl: u64,
        osl: u64,
        #[serde(default = "default_true")]
        saturation: bool,
    },
    Empirical {
        samples: Vec<TrafficSample>,
        #[serde(default = "default_true")]
        saturation: bool,
    },
}

fn default_true() -> bool {
    true
}

impl TrafficPattern {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            TrafficPattern::Static { isl, osl, .. } => {
                if *isl < 1 {
                    return Err(invalid("traffic.isl", "must be >= 1"));
                }
                if *osl < 2 {
                    return Err(invalid("traffic.osl", "must be >= 2 (at least one decode step)"));
                }
            }
            TrafficPattern::Empirical { samples, .. } => {
                if samples.is_empty() {
                    return Err(invalid("traffic.samples", "must be non-empty"));
                }
                let mut total = 0.0;
                for s in samples {
                    if s.isl < 1 {
                        return Err(invalid("traffic.samples.isl", "must be >= 1"));
                    }
                    if s.osl < 2 {
                        return Err(invalid("traffic.samples.osl", "must be >= 2"));
                    }
                    if !(s.weight > 0.0) {
                        return Err(invalid("traffic.samples.weight", "must be > 0"));
                    }
                    total += s.weight;
                }
                if (total - 1.0).abs() > 1e-6 {
                    return Err(invalid(
                        "traffic.samples.weight",
                        format!("weights must sum to 1 (got {total})"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn saturation(&self) -> bool {
        match self {
            TrafficPattern::Static { saturation, .. }
            | TrafficPattern::Empirical { saturation, .. } => *saturation,
        }
    }
}

/// Latency targets: FTL feasibility cutoff plus the swept TTL points
/// (interactivity = 1/TTL).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlaSpec {
    #[serde(default = "default_ftl_cutoff")]
    pub ftl_cutoff: f64,
    pub ttl_targets: Vec<f64>,
    /// Interactivity interval `[lo, hi]` for frontier-area integration.
    /// Defaults to `[1/max(ttl_targets), 1/min(ttl_targets)]`.
    #[serde(default)]
    pub interactivity_window: Option<[f64; 2]>,
}

fn default_ftl_cutoff() -> f64 {
    DEFAULT_FTL_CUTOFF_SECS
}

impl SlaSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.ftl_cutoff > 0.0) {
            return Err(invalid("sla.ftl_cutoff", "must be > 0"));
        }
        if self.ttl_targets.is_empty() {
            return Err(invalid("sla.ttl_targets", "must be non-empty"));
        }
        for pair in self.ttl_targets.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(invalid(
                    "sla.ttl_targets",
                    "must be strictly increasing and positive",
                ));
            }
        }
        if !(self.ttl_targets[0] > 0.0) {
            return Err(invalid("sla.ttl_targets", "must be strictly positive"));
        }
        if let Some([lo, hi]) = self.interactivity_window {
            if !(lo > 0.0 && hi > lo) {
                return Err(invalid(
                    "sla.interactivity_window",
                    "must satisfy 0 < lo < hi",
                ));
            }
        }
        Ok(())
    }

    /// Area-integration window: configured or derived from the TTL sweep.
    pub fn window(&self) -> [f64; 2] {
        self.interactivity_window.unwrap_or_else(|| {
            let lo = 1.0 / self.ttl_targets[self.ttl_targets.len() - 1];
            let hi = 1.0 / self.ttl_targets[0];
            [lo, hi]
        })
    }
}

// ---------------------------------------------------------------------------
// Parallelism mapping
// ---------------------------------------------------------------------------

/// Attention sharding: head-sharded tensor parallelism or replication with
/// requests split across replicas (`DataParallel` adapts its replica count
/// to the stage width).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttnShard {
    TensorParallel(u32),
    DataParallel,
}

/// FFN sharding: tensor-sliced dense layers or expert-distributed MoE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FfnShard {
    TensorParallel(u32),
    ExpertParallel(u32),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MappingError {
    #[error("expert parallelism requires an MoE model")]
    ExpertParallelOnDense,
    #[error("expert parallel degree {degree} exceeds num_experts {num_experts}")]
    ExpertDegreeTooWide { degree: u32, num_experts: u64 },
    #[error("tensor parallel degree {degree} exceeds num_q_heads {num_q_heads}")]
    TensorDegreeTooWide { degree: u32, num_q_heads: u64 },
    #[error("stage width {width} exceeds NVLink domain {domain}; cross-domain collectives inside one stage are rejected")]
    StageWiderThanDomain { width: u32, domain: u32 },
    #[error("shard degree {narrow} does not divide stage width {width}")]
    UnevenReplication { narrow: u32, width: u32 },
    #[error("degrees and stage counts must be >= 1")]
    ZeroDegree,
}

/// One parallelism assignment for a single model replica: attention and FFN
/// sharding, pipeline depth, and (for prefill) an optional chunk size for
/// chunked pipeline parallelism.
///
/// Constructed only through [`ParallelismMapping::new`], which derives the
/// per-stage width (the wider of the attention and FFN shards, with the
/// narrower side replicated) and the total GPU count `width * pp_stages`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelismMapping {
    pub attn_shard: AttnShard,
    pub ffn_shard: FfnShard,
    pub pp_stages: u32,
    pub cpp_chunk_tokens: Option<u64>,
    stage_width: u32,
    gpus: u32,
}

impl ParallelismMapping {
    pub fn new(
        attn_shard: AttnShard,
        ffn_shard: FfnShard,
        pp_stages: u32,
        cpp_chunk_tokens: Option<u64>,
        model: &ModelArch,
        hw: &HardwareSpec,
    ) -> Result<Self, MappingError> {
        if pp_stages == 0 {
            return Err(MappingError::ZeroDegree);
        }
        let attn_width = match attn_shard {
            AttnShard::TensorParallel(t) => {
                if t == 0 {
                    return Err(MappingError::ZeroDegree);
                }
                if u64::from(t) > model.num_q_heads {
                    return Err(MappingError::TensorDegreeTooWide {
                        degree: t,
                        num_q_heads: model.num_q_heads,
                    });
                }
                t
            }
            AttnShard::DataParallel => 1,
        };
        let ffn_width = match ffn_shard {
            FfnShard::TensorParallel(t) => {
                if t == 0 {
                    return Err(MappingError::ZeroDegree);
                }
                t
            }
            FfnShard::ExpertParallel(e) => {
                if e == 0 {
                    return Err(MappingError::ZeroDegree);
                }
                let FfnKind::Moe { num_experts, .. } = model.ffn else {
                    return Err(MappingError::ExpertParallelOnDense);
                };
                if u64::from(e) > num_experts {
                    return Err(MappingError::ExpertDegreeTooWide {
                        degree: e,
                        num_experts,
                    });
                }
                e
            }
        };
        let stage_width = attn_width.max(ffn_width);
        if stage_width % attn_width != 0 || stage_width % ffn_width != 0 {
            return Err(MappingError::UnevenReplication {
                narrow: attn_width.min(ffn_width),
                width: stage_width,
            });
        }
        if stage_width > hw.nvlink_domain_size {
            return Err(MappingError::StageWiderThanDomain {
                width: stage_width,
                domain: hw.nvlink_domain_size,
            });
        }
        Ok(Self {
            attn_shard,
            ffn_shard,
            pp_stages,
            cpp_chunk_tokens,
            stage_width,
            gpus: stage_width * pp_stages,
        })
    }

    /// GPUs per pipeline stage.
    pub fn stage_width(&self) -> u32 {
        self.stage_width
    }

    /// Total GPUs in one model replica (`stage_width * pp_stages`).
    pub fn gpus(&self) -> u32 {
        self.gpus
    }

    /// Tensor-parallel degree applied to attention (1 for data parallel).
    pub fn attn_tp_degree(&self) -> u32 {
        match self.attn_shard {
            AttnShard::TensorParallel(t) => t,
            AttnShard::DataParallel => 1,
        }
    }

    /// Replica count of the attention weights within one stage.
    pub fn attn_replicas(&self) -> u32 {
        self.stage_width / self.attn_tp_degree()
    }

    /// Short stable label, e.g. `tp8-ep32-pp2-cpp4096`.
    pub fn label(&self) -> String {
        let attn = match self.attn_shard {
            AttnShard::TensorParallel(t) => format!("tp{t}"),
            AttnShard::DataParallel => "dp".to_string(),
        };
        let ffn = match self.ffn_shard {
            FfnShard::TensorParallel(t) => format!("ftp{t}"),
            FfnShard::ExpertParallel(e) => format!("ep{e}"),
        };
        let mut s = format!("{attn}-{ffn}-pp{}", self.pp_stages);
        if let Some(c) = self.cpp_chunk_tokens {
            s.push_str(&format!("-cpp{c}"));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Config document
// ---------------------------------------------------------------------------

/// Raw `model` section before KV-byte resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    pub num_layers: u64,
    pub hidden_dim: u64,
    pub num_q_heads: u64,
    pub d_head: u64,
    pub num_kv_heads: u64,
    pub attention: AttentionKind,
    pub ffn: FfnKind,
    pub vocab_size: u64,
    pub weight_bytes_per_param: f64,
    /// Bytes per stored KV element; used only when
    /// `kv_bytes_per_token_per_layer` is absent.
    #[serde(default)]
    pub kv_element_bytes: Option<f64>,
    /// Explicit override for the per-token per-layer KV byte count.
    #[serde(default)]
    pub kv_bytes_per_token_per_layer: Option<f64>,
    #[serde(default)]
    pub activation_bytes: Option<f64>,
    #[serde(default)]
    pub tie_embeddings: bool,
}

impl ModelSection {
    pub fn resolve(&self) -> Result<ModelArch, ConfigError> {
        let elem = self.kv_element_bytes.unwrap_or(DEFAULT_KV_ELEMENT_BYTES);
        if !(elem > 0.0) {
            return Err(invalid("model.kv_element_bytes", "must be > 0"));
        }
        let kv_ptl = match self.kv_bytes_per_token_per_layer {
            Some(v) => v,
            None => match self.attention {
                AttentionKind::Gqa => {
                    2.0 * self.d_head as f64 * self.num_kv_heads as f64 * elem
                }
                AttentionKind::Mla { latent_dim } => latent_dim as f64 * elem,
            },
        };
        let model = ModelArch {
            name: self.name.clone(),
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            num_q_heads: self.num_q_heads,
            d_head: self.d_head,
            num_kv_heads: self.num_kv_heads,
            attention: self.attention,
            ffn: self.ffn,
            vocab_size: self.vocab_size,
            weight_bytes_per_param: self.weight_bytes_per_param,
            kv_bytes_per_token_per_layer: kv_ptl,
            activation_bytes: self.activation_bytes.unwrap_or(DEFAULT_ACTIVATION_BYTES),
            tie_embeddings: self.tie_embeddings,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Optional `search` section: overrides for the default design space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    #[serde(default)]
    pub tp_degrees: Option<Vec<u32>>,
    #[serde(default)]
    pub ep_degrees: Option<Vec<u32>>,
    #[serde(default)]
    pub pp_stages: Option<Vec<u32>>,
    #[serde(default)]
    pub cpp_chunk_sizes: Option<Vec<u64>>,
    #[serde(default)]
    pub batch_sizes: Option<Vec<u64>>,
    #[serde(default)]
    pub max_gpus_per_replica: Option<u32>,
    #[serde(default)]
    pub mla_chunk_reuse: Option<bool>,
}

/// One labeled traffic cell in a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficCell {
    pub label: String,
    pub isl: u64,
    pub osl: u64,
}

/// One labeled model cell in a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCell {
    pub label: String,
    pub model: ModelSection,
}

/// Optional `sweep` section consumed by the CLI `sweep` subcommand.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub traffic: Option<Vec<TrafficCell>>,
    #[serde(default)]
    pub models: Option<Vec<ModelCell>>,
    #[serde(default)]
    pub nvlink_domains: Option<Vec<u32>>,
    #[serde(default)]
    pub ratios: Option<Vec<f64>>,
}

/// Optional `budget` section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    pub max_total_gpus: u64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            max_total_gpus: DEFAULT_MAX_TOTAL_GPUS,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelSection,
    hardware: HardwareSpec,
    traffic: TrafficPattern,
    sla: SlaSpec,
    #[serde(default)]
    search: Option<SearchSection>,
    #[serde(default)]
    sweep: Option<SweepSection>,
    #[serde(default)]
    budget: Option<BudgetSection>,
}

/// Fully validated configuration document.
#[derive(Debug, Clone)]
pub struct ConfigDoc {
    pub model: ModelArch,
    pub hardware: HardwareSpec,
    pub traffic: TrafficPattern,
    pub sla: SlaSpec,
    pub search: SearchSection,
    pub sweep: SweepSection,
    pub budget: BudgetSection,
}

/// Parse and validate a JSON config document.
pub fn load_config(text: &str) -> Result<ConfigDoc, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text)?;
    let model = raw.model.resolve()?;
    raw.hardware.validate()?;
    raw.traffic.validate()?;
    raw.sla.validate()?;
    Ok(ConfigDoc {
        model,
        hardware: raw.hardware,
        traffic: raw.traffic,
        sla: raw.sla,
        search: raw.search.unwrap_or_default(),
        sweep: raw.sweep.unwrap_or_default(),
        budget: raw.budget.unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_model_doc() -> String {
        r#"{
            "model": {
                "name": "tiny",
                "num_layers": 1,
                "hidden_dim": 4,
                "num_q_heads": 1,
                "d_head": 4,
                "num_kv_heads": 1,
                "attention": {"kind": "gqa"},
                "ffn": {"kind": "dense", "inter_dim": 8},
                "vocab_size": 16,
                "weight_bytes_per_param": 2.0,
                "kv_element_bytes": 2.0
            },
            "hardware": {
                "flops_dense": 1e15,
                "hbm_bandwidth": 4e12,
                "hbm_capacity": 96e9,
                "nvlink_domain_size": 8,
                "nvlink_bw_per_gpu": 450e9,
                "scaleout_bw_per_gpu": 50e9,
                "per_message_latency": 1e-6,
                "compute_efficiency": 0.8
            },
            "traffic": {"kind": "static", "isl": 1024, "osl": 128},
            "sla": {"ttl_targets": [0.005, 0.01, 0.02]}
        }"#
        .to_string()
    }

    #[test]
    fn round_trips_minimal_gqa_model() {
        let doc = tiny_model_doc();
        let cfg = load_config(&doc).unwrap();
        assert_eq!(cfg.model.name, "tiny");
        assert_eq!(cfg.model.num_layers, 1);
        assert_eq!(cfg.model.hidden_dim, 4);
        assert_eq!(cfg.model.vocab_size, 16);
        // GQA default includes the K/V pair factor: 2 * d_head * kv_heads * elem.
        assert_eq!(cfg.model.kv_bytes_per_token_per_layer, 2.0 * 4.0 * 1.0 * 2.0);

        // serialize(load(doc)) parses back to an equal value set
        let ser = serde_json::to_string(&cfg.model).unwrap();
        let back: ModelArch = serde_json::from_str(&ser).unwrap();
        assert_eq!(back, cfg.model);
    }

    #[test]
    fn ftl_cutoff_defaults_to_ten_seconds() {
        let cfg = load_config(&tiny_model_doc()).unwrap();
        assert_eq!(cfg.sla.ftl_cutoff, 10.0);
    }

    #[test]
    fn zero_kv_heads_is_a_validation_error() {
        let doc = tiny_model_doc().replace("\"num_kv_heads\": 1", "\"num_kv_heads\": 0");
        let err = load_config(&doc).unwrap_err();
        match err {
            ConfigError::Validation { field, .. } => assert_eq!(field, "num_kv_heads"),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let doc = tiny_model_doc().replace("\"name\": \"tiny\",", "\"name\": \"tiny\", \"nam\": 1,");
        let err = load_config(&doc).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)), "got {err}");
        assert!(err.to_string().contains("nam"));
    }

    #[test]
    fn hand_expanded_param_count_for_tiny_dense_model() {
        // 1 layer, hidden 4, dense inter 8, vocab 16, 1 q head of d_head 4,
        // 1 kv head, untied embeddings.
        //   attention: q 4*4 + k 4*4 + v 4*4 + o 4*4            = 64
        //   ffn (gate/up/down): 3 * 4 * 8                        = 96
        //   embeddings (input + head): 2 * 16 * 4                = 128
        let cfg = load_config(&tiny_model_doc()).unwrap();
        let count = derived_param_count(&cfg.model);
        assert_eq!(count.total, 288);
        assert_eq!(count.active, 288);
    }

    #[test]
    fn moe_with_top_k_equal_to_experts_has_active_equal_total() {
        let mut cfg = load_config(&tiny_model_doc()).unwrap();
        cfg.model.ffn = FfnKind::Moe {
            num_experts: 4,
            top_k: 4,
            expert_inter_dim: 8,
        };
        let count = derived_param_count(&cfg.model);
        assert_eq!(count.total, count.active);
    }

    #[test]
    fn doubling_layers_doubles_non_embedding_params() {
        let cfg = load_config(&tiny_model_doc()).unwrap();
        let base = derived_param_count(&cfg.model);
        let mut doubled = cfg.model.clone();
        doubled.num_layers *= 2;
        let twice = derived_param_count(&doubled);
        let emb = cfg.model.embedding_params();
        assert_eq!(twice.total - emb, 2 * (base.total - emb));
    }

    #[test]
    fn kv_bytes_match_direct_evaluation() {
        // 2 layers, d_head 128, 8 kv heads, 2-byte elements, seq 1024:
        // 2 * 1024 * (2*128*8*2) = 8,388,608
        let model = ModelArch {
            name: "kv".into(),
            num_layers: 2,
            hidden_dim: 1024,
            num_q_heads: 8,
            d_head: 128,
            num_kv_heads: 8,
            attention: AttentionKind::Gqa,
            ffn: FfnKind::Dense { inter_dim: 4096 },
            vocab_size: 1000,
            weight_bytes_per_param: 2.0,
            kv_bytes_per_token_per_layer: 2.0 * 128.0 * 8.0 * 2.0,
            activation_bytes: 2.0,
            tie_embeddings: false,
        };
        assert_eq!(kv_bytes_per_request(&model, 1024), 8_388_608.0);
        // seq_len = 1 degenerates to layers * per-token-layer bytes
        assert_eq!(
            kv_bytes_per_request(&model, 1),
            model.num_layers as f64 * model.kv_bytes_per_token_per_layer
        );
    }

    #[test]
    fn mla_kv_is_smaller_when_latent_beats_head_product() {
        let gqa_ptl = 2.0 * 128.0 * 8.0 * 2.0;
        let mla_ptl = 576.0 * 2.0;
        assert!(mla_ptl < gqa_ptl);
    }

    #[test]
    fn param_count_is_invariant_under_field_reordering() {
        let doc = tiny_model_doc();
        let value: serde_json::Value = serde_json::from_str(&doc).unwrap();
        // serde_json maps are sorted; re-serializing produces a reordered
        // document relative to the hand-written one.
        let reordered = serde_json::to_string(&value).unwrap();
        assert_ne!(doc, reordered);
        let a = load_config(&doc).unwrap();
        let b = load_config(&reordered).unwrap();
        assert_eq!(derived_param_count(&a.model), derived_param_count(&b.model));
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn mapping_derives_width_and_gpus() {
        let cfg = load_config(&tiny_model_doc()).unwrap();
        let mut model = cfg.model.clone();
        model.num_q_heads = 64;
        model.num_kv_heads = 8;
        model.ffn = FfnKind::Moe {
            num_experts: 32,
            top_k: 2,
            expert_inter_dim: 8,
        };
        let mut hw = cfg.hardware.clone();
        hw.nvlink_domain_size = 32;
        let m = ParallelismMapping::new(
            AttnShard::TensorParallel(4),
            FfnShard::ExpertParallel(8),
            2,
            None,
            &model,
            &hw,
        )
        .unwrap();
        assert_eq!(m.stage_width(), 8);
        assert_eq!(m.gpus(), 16);
        assert_eq!(m.attn_replicas(), 2);

        // EP on a dense model is rejected
        let dense = cfg.model.clone();
        let err = ParallelismMapping::new(
            AttnShard::DataParallel,
            FfnShard::ExpertParallel(2),
            1,
            None,
            &dense,
            &hw,
        )
        .unwrap_err();
        assert_eq!(err, MappingError::ExpertParallelOnDense);

        // stage wider than the NVLink domain is rejected
        hw.nvlink_domain_size = 4;
        let err = ParallelismMapping::new(
            AttnShard::TensorParallel(8),
            FfnShard::TensorParallel(8),
            1,
            None,
            &model,
            &hw,
        )
        .unwrap_err();
        assert!(matches!(err, MappingError::StageWiderThanDomain { .. }));
    }

    #[test]
    fn kv_bytes_linear_in_seq_len_and_layers() {
        let cfg = load_config(&tiny_model_doc()).unwrap();
        let m = cfg.model;
        for seq in [1u64, 7, 64, 4096] {
            assert_eq!(
                kv_bytes_per_request(&m, seq),
                seq as f64 * kv_bytes_per_request(&m, 1)
            );
        }
        let mut deeper = m.clone();
        deeper.num_layers = 5;
        assert_eq!(
            kv_bytes_per_request(&deeper, 100),
            5.0 * kv_bytes_per_request(&m, 100)
        );
    }
}
