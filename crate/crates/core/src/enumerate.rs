//! Design-space generation and feasibility filtering.
//!
//! Candidates are the Cartesian product of parallelism mappings and batch
//! sizes. Mapping families follow the usual serving strategies: dense models
//! pair attention TP (or data-parallel attention) with same-degree FFN TP;
//! MoE models pair data-parallel or tensor-parallel attention with expert
//! parallelism (TEP). Pipeline depth and, for prefill, chunk sizes multiply
//! the space. Evaluation is embarrassingly parallel; results are merged in a
//! canonical order so the output never depends on scheduling or input order.

use serde::Serialize;

use crate::par::map_collect;
use crate::perfmodel::{
    estimate_colocated, estimate_decode, estimate_prefill, ColocatedPoint, Feasibility, PhasePerf,
};
use crate::workload::{
    AttnShard, FfnKind, FfnShard, HardwareSpec, ModelArch, ParallelismMapping, SearchSection,
    SlaSpec,
};

/// Candidate lists for the design-space sweep. Power-of-two defaults mirror
/// production sweeps while keeping desk-scale runtime in seconds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSpace {
    pub tp_degrees: Vec<u32>,
    /// Expert-parallel degrees; only consulted for MoE models.
    pub ep_degrees: Vec<u32>,
    pub pp_stages: Vec<u32>,
    /// Chunk sizes for chunked-pipeline prefill and piggybacked co-location.
    /// May be empty (no chunking / piggybacking disabled).
    pub cpp_chunk_sizes: Vec<u64>,
    pub batch_sizes: Vec<u64>,
    pub max_gpus_per_replica: u32,
    /// Cache up-projected MLA chunk KV instead of recomputing per chunk.
    pub mla_chunk_reuse: bool,
}

fn pow2_up_to(max: u64) -> Vec<u64> {
    let mut v = Vec::new();
    let mut x = 1u64;
    while x <= max {
        v.push(x);
        x *= 2;
    }
    v
}

impl SearchSpace {
    /// Defaults: TP up to `min(nvlink_domain, num_q_heads)`, EP up to
    /// `min(nvlink_domain, num_experts)`, PP up to 16, batches 1..=1024,
    /// chunks 512..=8192, all powers of two.
    pub fn default_for(model: &ModelArch, hw: &HardwareSpec) -> Self {
        let domain = u64::from(hw.nvlink_domain_size);
        let tp_max = domain.min(model.num_q_heads);
        let ep_max = match model.ffn {
            FfnKind::Moe { num_experts, .. } => domain.min(num_experts),
            FfnKind::Dense { .. } => 1,
        };
        SearchSpace {
            tp_degrees: pow2_up_to(tp_max).into_iter().map(|x| x as u32).collect(),
            ep_degrees: pow2_up_to(ep_max).into_iter().map(|x| x as u32).collect(),
            pp_stages: pow2_up_to(16).into_iter().map(|x| x as u32).collect(),
            cpp_chunk_sizes: pow2_up_to(8192).into_iter().filter(|&c| c >= 512).collect(),
            batch_sizes: pow2_up_to(1024),
            max_gpus_per_replica: hw.nvlink_domain_size * 16,
            mla_chunk_reuse: false,
        }
    }

    /// Defaults overridden by the config's optional `search` section.
    pub fn from_config(model: &ModelArch, hw: &HardwareSpec, section: &SearchSection) -> Self {
        let mut space = Self::default_for(model, hw);
        if let Some(v) = &section.tp_degrees {
            space.tp_degrees = v.clone();
        }
        if let Some(v) = &section.ep_degrees {
            space.ep_degrees = v.clone();
        }
        if let Some(v) = &section.pp_stages {
            space.pp_stages = v.clone();
        }
        if let Some(v) = &section.cpp_chunk_sizes {
            space.cpp_chunk_sizes = v.clone();
        }
        if let Some(v) = &section.batch_sizes {
            space.batch_sizes = v.clone();
        }
        if let Some(v) = section.max_gpus_per_replica {
            space.max_gpus_per_replica = v;
        }
        if let Some(v) = section.mla_chunk_reuse {
            space.mla_chunk_reuse = v;
        }
        space
    }
}

/// Where the generated candidates went. `generated` counts every tuple in
/// the declared product; the remaining counters partition the drops, so
/// `emitted = generated - invalid_mapping - over_gpu_budget -
/// infeasible_memory - over_ftl_cutoff`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EnumStats {
    pub generated: usize,
    pub invalid_mapping: usize,
    pub over_gpu_budget: usize,
    pub infeasible_memory: usize,
    pub over_ftl_cutoff: usize,
    pub emitted: usize,
}

#[derive(Debug, Clone)]
pub struct Enumerated<T> {
    pub points: Vec<T>,
    pub stats: EnumStats,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum MappingPhase {
    Prefill,
    DecodeOrColocated,
}

/// Strategy-family shard pairs for a model.
fn shard_pairs(model: &ModelArch, space: &SearchSpace) -> Vec<(AttnShard, FfnShard)> {
    let mut pairs = Vec::new();
    match model.ffn {
        FfnKind::Dense { .. } => {
            for &t in &space.tp_degrees {
                pairs.push((AttnShard::DataParallel, FfnShard::TensorParallel(t)));
                if t > 1 {
                    pairs.push((AttnShard::TensorParallel(t), FfnShard::TensorParallel(t)));
                }
            }
        }
        FfnKind::Moe { .. } => {
            for &e in &space.ep_degrees {
                pairs.push((AttnShard::DataParallel, FfnShard::ExpertParallel(e)));
                for &t in &space.tp_degrees {
                    if t > 1 {
                        pairs.push((AttnShard::TensorParallel(t), FfnShard::ExpertParallel(e)));
                    }
                }
            }
        }
    }
    pairs
}

/// Build every mapping in the declared product, counting construction
/// rejections and replica-budget drops.
fn candidate_mappings(
    model: &ModelArch,
    hw: &HardwareSpec,
    space: &SearchSpace,
    phase: MappingPhase,
) -> (Vec<ParallelismMapping>, EnumStats) {
    let chunk_options: Vec<Option<u64>> = match phase {
        MappingPhase::Prefill => std::iter::once(None)
            .chain(space.cpp_chunk_sizes.iter().map(|&c| Some(c)))
            .collect(),
        MappingPhase::DecodeOrColocated => vec![None],
    };
    let mut stats = EnumStats::default();
    let mut mappings = Vec::new();
    for (attn, ffn) in shard_pairs(model, space) {
        for &pp in &space.pp_stages {
            for &chunk in &chunk_options {
                stats.generated += 1;
                match ParallelismMapping::new(attn, ffn, pp, chunk, model, hw) {
                    Ok(m) => {
                        if m.gpus() > space.max_gpus_per_replica {
                            stats.over_gpu_budget += 1;
                        } else {
                            mappings.push(m);
                        }
                    }
                    Err(_) => stats.invalid_mapping += 1,
                }
            }
        }
    }
    (mappings, stats)
}

fn mapping_sort_key(m: &ParallelismMapping) -> (u32, String, u32) {
    (m.gpus(), m.label(), m.pp_stages)
}

/// Enumerate prefill candidates, dropping memory-infeasible points and
/// points slower than the FTL cutoff. Sorted by per-GPU request rate
/// descending (ties: fewer GPUs, lower latency, label, batch).
pub fn enumerate_prefill(
    model: &ModelArch,
    hw: &HardwareSpec,
    space: &SearchSpace,
    sla: &SlaSpec,
    isl: u64,
) -> Enumerated<PhasePerf> {
    let (mappings, mut stats) = candidate_mappings(model, hw, space, MappingPhase::Prefill);
    stats.generated = stats.generated * space.batch_sizes.len();
    stats.invalid_mapping *= space.batch_sizes.len();
    stats.over_gpu_budget *= space.batch_sizes.len();

    let tuples: Vec<(ParallelismMapping, u64)> = mappings
        .iter()
        .flat_map(|m| space.batch_sizes.iter().map(move |&b| (*m, b)))
        .collect();
    let cutoff = sla.ftl_cutoff;
    let results = map_collect(tuples, |(mapping, batch)| {
        estimate_prefill(model, hw, &mapping, batch, isl)
            .expect("pre-validated mapping and batch >= 1")
    });

    let mut points = Vec::new();
    for outcome in results {
        match outcome {
            Feasibility::Infeasible(_) => stats.infeasible_memory += 1,
            Feasibility::Feasible(p) => {
                if p.latency > cutoff {
                    stats.over_ftl_cutoff += 1;
                } else {
                    points.push(p);
                }
            }
        }
    }
    points.sort_by(|a, b| {
        b.per_gpu_request_rate
            .total_cmp(&a.per_gpu_request_rate)
            .then(a.mapping.gpus().cmp(&b.mapping.gpus()))
            .then(a.latency.total_cmp(&b.latency))
            .then(mapping_sort_key(&a.mapping).cmp(&mapping_sort_key(&b.mapping)))
            .then(a.batch.cmp(&b.batch))
    });
    stats.emitted = points.len();
    Enumerated { points, stats }
}

/// Enumerate decode candidates. No FTL filter (TTL targets are applied
/// downstream); memory-infeasible points are dropped.
pub fn enumerate_decode(
    model: &ModelArch,
    hw: &HardwareSpec,
    space: &SearchSpace,
    isl: u64,
    osl: u64,
) -> Enumerated<PhasePerf> {
    let (mappings, mut stats) =
        candidate_mappings(model, hw, space, MappingPhase::DecodeOrColocated);
    stats.generated *= space.batch_sizes.len();
    stats.invalid_mapping *= space.batch_sizes.len();
    stats.over_gpu_budget *= space.batch_sizes.len();

    let tuples: Vec<(ParallelismMapping, u64)> = mappings
        .iter()
        .flat_map(|m| space.batch_sizes.iter().map(move |&b| (*m, b)))
        .collect();
    let results = map_collect(tuples, |(mapping, batch)| {
        estimate_decode(model, hw, &mapping, batch, isl, osl)
            .expect("pre-validated mapping and batch >= 1")
    });

    let mut points = Vec::new();
    for outcome in results {
        match outcome {
            Feasibility::Infeasible(_) => stats.infeasible_memory += 1,
            Feasibility::Feasible(p) => points.push(p),
        }
    }
    points.sort_by(|a, b| {
        b.per_gpu_token_rate
            .total_cmp(&a.per_gpu_token_rate)
            .then(a.mapping.gpus().cmp(&b.mapping.gpus()))
            .then(a.latency.total_cmp(&b.latency))
            .then(mapping_sort_key(&a.mapping).cmp(&mapping_sort_key(&b.mapping)))
            .then(a.batch.cmp(&b.batch))
    });
    stats.emitted = points.len();
    Enumerated { points, stats }
}

/// Enumerate co-located candidates: every mapping and batch, both without a
/// chunk (plain IFB) and with each piggyback chunk size. Both variants are
/// kept so the downstream frontier is their superposition.
pub fn enumerate_colocated(
    model: &ModelArch,
    hw: &HardwareSpec,
    space: &SearchSpace,
    isl: u64,
    osl: u64,
) -> Enumerated<ColocatedPoint> {
    let (mappings, mut stats) =
        candidate_mappings(model, hw, space, MappingPhase::DecodeOrColocated);
    let chunk_options: Vec<Option<u64>> = std::iter::once(None)
        .chain(space.cpp_chunk_sizes.iter().map(|&c| Some(c)))
        .collect();
    let per_mapping = space.batch_sizes.len() * chunk_options.len();
    stats.generated *= per_mapping;
    stats.invalid_mapping *= per_mapping;
    stats.over_gpu_budget *= per_mapping;

    let mla_reuse = space.mla_chunk_reuse;
    let mut tuples: Vec<(ParallelismMapping, u64, Option<u64>)> =
        Vec::with_capacity(mappings.len() * per_mapping);
    for m in &mappings {
        for &b in &space.batch_sizes {
            for &c in &chunk_options {
                tuples.push((*m, b, c));
            }
        }
    }
    let results = map_collect(tuples, |(mapping, batch, chunk)| {
        estimate_colocated(model, hw, &mapping, batch, chunk, isl, osl, mla_reuse)
            .expect("pre-validated mapping and batch >= 1")
    });

    let mut points = Vec::new();
    for outcome in results {
        match outcome {
            Feasibility::Infeasible(_) => stats.infeasible_memory += 1,
            Feasibility::Feasible(p) => points.push(p),
        }
    }
    points.sort_by(|a, b| {
        b.per_gpu_token_rate
            .total_cmp(&a.per_gpu_token_rate)
            .then(a.mapping.gpus().cmp(&b.mapping.gpus()))
            .then(a.ttl_effective.total_cmp(&b.ttl_effective))
            .then(mapping_sort_key(&a.mapping).cmp(&mapping_sort_key(&b.mapping)))
            .then(a.batch.cmp(&b.batch))
            .then(a.chunk_tokens.cmp(&b.chunk_tokens))
    });
    stats.emitted = points.len();
    Enumerated { points, stats }
}
