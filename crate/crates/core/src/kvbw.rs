//! KV-cache transfer bandwidth requirements for disaggregated serving.
//!
//! Prefill GPUs produce KV cache layer by layer, so transfer can overlap
//! prefill compute; the egress budget that achieves full overlap is the KV
//! volume divided by the prefill time and the number of GPUs that uniquely
//! shard the cache. Ingress is bounded by the decode residency of the
//! request (TTL × OSL). Both formulas route through
//! [`ModelArch::kv_bytes_per_token_per_layer`] so the K/V pair convention is
//! set in exactly one place; with the GQA default that field expands to
//! `2 * d_head * num_kv_heads * kv_element_bytes`, and any other convention
//! is expressed by setting the field explicitly.

use serde::Serialize;
use thiserror::Error;

use crate::ratematch::DeploymentPoint;
use crate::simulate::nominal_lengths;
use crate::workload::{
    AttentionKind, AttnShard, HardwareSpec, ModelArch, ParallelismMapping, TrafficPattern,
};

#[derive(Debug, Error, PartialEq)]
pub enum BandwidthError {
    #[error("zero divisor in bandwidth formula: {0}")]
    ZeroDivisor(&'static str),
}

/// Per-GPU egress bandwidth (bytes/second) a prefill instance needs to fully
/// overlap KV transfer with prefill compute:
/// `num_layers * batch * isl * kv_bytes_per_token_per_layer / (ftl * num_sharding_gpus)`.
///
/// `num_prefill_gpus_sharding` counts only the GPUs holding distinct KV
/// shards (GPU count divided by the duplication factor).
pub fn egress_bw(
    model: &ModelArch,
    batch_prefill: u64,
    isl: u64,
    ftl: f64,
    num_prefill_gpus_sharding: f64,
) -> Result<f64, BandwidthError> {
    if !(ftl > 0.0) {
        return Err(BandwidthError::ZeroDivisor("ftl"));
    }
    if !(num_prefill_gpus_sharding > 0.0) {
        return Err(BandwidthError::ZeroDivisor("num_prefill_gpus_sharding"));
    }
    let volume = (model.num_layers as u128 * batch_prefill as u128 * isl as u128) as f64
        * model.kv_bytes_per_token_per_layer;
    Ok(volume / (ftl * num_prefill_gpus_sharding))
}

/// Per-GPU ingress bandwidth (bytes/second) a decode instance needs, given
/// that a request's KV must land within its decode residency `ttl * osl`:
/// `num_layers * batch * isl * kv_bytes_per_token_per_layer / (ttl * osl * num_sharding_gpus)`.
pub fn ingress_bw(
    model: &ModelArch,
    batch_decode: u64,
    isl: u64,
    ttl: f64,
    osl: u64,
    num_decode_gpus_sharding: f64,
) -> Result<f64, BandwidthError> {
    if !(ttl > 0.0) {
        return Err(BandwidthError::ZeroDivisor("ttl"));
    }
    if osl == 0 {
        return Err(BandwidthError::ZeroDivisor("osl"));
    }
    if !(num_decode_gpus_sharding > 0.0) {
        return Err(BandwidthError::ZeroDivisor("num_decode_gpus_sharding"));
    }
    let volume = (model.num_layers as u128 * batch_decode as u128 * isl as u128) as f64
        * model.kv_bytes_per_token_per_layer;
    Ok(volume / (ttl * osl as f64 * num_decode_gpus_sharding))
}

/// KV replication ratio of a mapping. Tensor parallelism wider than the
/// number of KV heads duplicates the cache across ranks
/// (`tp_degree / num_kv_heads`); data-parallel attention replicates requests,
/// not shards, so its factor is 1. MLA's latent cache has no head axis to
/// shard, so TP over MLA duplicates by the full degree.
pub fn duplication_factor(mapping: &ParallelismMapping, model: &ModelArch) -> f64 {
    match mapping.attn_shard {
        AttnShard::DataParallel => 1.0,
        AttnShard::TensorParallel(t) => match model.attention {
            AttentionKind::Gqa => (f64::from(t) / model.num_kv_heads as f64).max(1.0),
            AttentionKind::Mla { .. } => f64::from(t),
        },
    }
}

/// GPUs in one replica of `mapping` that hold distinct KV shards.
pub fn kv_sharding_width(mapping: &ParallelismMapping, model: &ModelArch) -> f64 {
    f64::from(mapping.gpus()) / duplication_factor(mapping, model)
}

/// Which transfer direction binds the provisioning requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BindingDirection {
    Egress,
    Ingress,
}

/// Provisioning verdict against the configured scale-out bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthVerdict {
    Sufficient,
    Insufficient,
}

/// Bandwidth requirement for one rate-matched deployment point.
#[derive(Debug, Clone, Serialize)]
pub struct BandwidthReport {
    pub egress_per_gpu: f64,
    pub ingress_per_gpu: f64,
    pub binding: BindingDirection,
    /// Duplication factor of the binding side's mapping.
    pub duplication_factor: f64,
    pub ftl: f64,
    pub ttl: f64,
    pub isl: u64,
    pub osl: u64,
    pub batch_prefill: u64,
    pub batch_decode: u64,
    pub num_prefill_gpus: u64,
    pub num_decode_gpus: u64,
    pub provisioned_per_gpu: f64,
    pub verdict: BandwidthVerdict,
}

/// Evaluate Eq.-style egress/ingress requirements for each deployment point
/// and compare the binding direction against `hw.scaleout_bw_per_gpu`.
///
/// Sharding widths follow the duplication rule: per-instance GPU count
/// divided by the mapping's duplication factor.
pub fn bandwidth_sweep(
    model: &ModelArch,
    hw: &HardwareSpec,
    deployments: &[DeploymentPoint],
    traffic: &TrafficPattern,
) -> Vec<BandwidthReport> {
    let (isl, osl) = nominal_lengths(traffic);
    deployments
        .iter()
        .map(|d| {
            let prefill_sharding = kv_sharding_width(&d.prefill.mapping, model);
            let decode_sharding = kv_sharding_width(&d.decode.mapping, model);
            let egress = egress_bw(model, d.prefill.batch, isl, d.prefill.latency, prefill_sharding)
                .expect("deployment points carry positive FTL and GPU counts");
            let ingress = ingress_bw(
                model,
                d.decode.batch,
                isl,
                d.decode.latency,
                osl,
                decode_sharding,
            )
            .expect("deployment points carry positive TTL and GPU counts");
            let (binding, dup) = if egress >= ingress {
                (
                    BindingDirection::Egress,
                    duplication_factor(&d.prefill.mapping, model),
                )
            } else {
                (
                    BindingDirection::Ingress,
                    duplication_factor(&d.decode.mapping, model),
                )
            };
            let required = egress.max(ingress);
            BandwidthReport {
                egress_per_gpu: egress,
                ingress_per_gpu: ingress,
                binding,
                duplication_factor: dup,
                ftl: d.prefill.latency,
                ttl: d.decode.latency,
                isl,
                osl,
                batch_prefill: d.prefill.batch,
                batch_decode: d.decode.batch,
                num_prefill_gpus: d.num_prefill_gpus,
                num_decode_gpus: d.num_decode_gpus,
                provisioned_per_gpu: hw.scaleout_bw_per_gpu,
                verdict: if required <= hw.scaleout_bw_per_gpu {
                    BandwidthVerdict::Sufficient
                } else {
                    BandwidthVerdict::Insufficient
                },
            }
        })
        .collect()
}
