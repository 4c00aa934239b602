//! Analytical roofline estimator for prefill, decode, and mixed (co-located)
//! iterations.
//!
//! The cost model is deliberately simple and auditable:
//!
//! * per-op time = `max(flops / (flops_dense * compute_efficiency),
//!   bytes / hbm_bandwidth)`, with the losing term reported as overlapped
//!   time in the breakdown;
//! * collectives cost `volume / link_bandwidth + per_message_latency *
//!   step_count`, with ring-efficient volume factors (allreduce
//!   `2(n-1)/n`, all-to-all `(n-1)/n`) and tree-style step counts
//!   (allreduce `2*ceil(log2 n)`, all-to-all 1 — concurrent pairwise
//!   exchange over a switched fabric);
//! * attention compute is quadratic in processed sequence length with the
//!   causal factor 1/2; decode context is evaluated at the median of the
//!   generation, `isl + osl/2`;
//! * chunked pipeline parallelism overlaps chunk `c`'s stage `s` with chunk
//!   `c+1`'s stage `s-1`; the fill/drain cost beyond the sequential-chunk
//!   sum is reported as `pp_bubble`.
//!
//! Embedding/head FLOPs, activation HBM traffic, norm/bias work, and
//! intra-stage compute/communication overlap are ignored; expert load is
//! assumed perfectly balanced.

use serde::Serialize;
use thiserror::Error;

use crate::kvbw::duplication_factor;
use crate::workload::{
    AttentionKind, AttnShard, FfnKind, FfnShard, HardwareSpec, MappingError, ModelArch,
    ParallelismMapping,
};

#[derive(Debug, Error, PartialEq)]
pub enum PerfError {
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("batch must be >= 1")]
    ZeroBatch,
    #[error("isl must be >= 1")]
    ZeroIsl,
    #[error("osl must be >= 2")]
    OslTooSmall,
    #[error("chunk_tokens must be >= 1")]
    ZeroChunk,
}

/// Outcome of an estimate whose inputs were valid but whose memory footprint
/// may exceed HBM. Not an error: enumeration consumes and counts these.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility<T> {
    Feasible(T),
    Infeasible(Infeasibility),
}

/// Why a candidate does not fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Infeasibility {
    pub hbm_required: f64,
    pub hbm_capacity: f64,
}

impl<T> Feasibility<T> {
    pub fn feasible(self) -> Option<T> {
        match self {
            Feasibility::Feasible(v) => Some(v),
            Feasibility::Infeasible(_) => None,
        }
    }

    pub fn as_feasible(&self) -> Option<&T> {
        match self {
            Feasibility::Feasible(v) => Some(v),
            Feasibility::Infeasible(_) => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }

    /// Unwrap a feasible value; panics with the HBM numbers otherwise.
    pub fn expect_feasible(self, msg: &str) -> T {
        match self {
            Feasibility::Feasible(v) => v,
            Feasibility::Infeasible(i) => panic!(
                "{msg}: infeasible (requires {:.3e} B of {:.3e} B HBM)",
                i.hbm_required, i.hbm_capacity
            ),
        }
    }
}

/// Wall-time decomposition of one estimate, in seconds.
///
/// `gemm`/`attention` are compute-roofline term sums, `weight_load`/`kv_load`
/// memory-roofline term sums; `overlapped` is the time hidden inside the
/// per-step `max` (the losing roofline terms), so that
/// `latency = gemm + attention + weight_load + kv_load - overlapped
/// + allreduce + alltoall + pp_bubble` holds exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Breakdown {
    pub gemm: f64,
    pub attention: f64,
    pub weight_load: f64,
    pub kv_load: f64,
    pub allreduce: f64,
    pub alltoall: f64,
    pub pp_bubble: f64,
    pub overlapped: f64,
}

impl Breakdown {
    /// Recombine the components; estimates set `latency` to exactly this.
    pub fn latency(&self) -> f64 {
        self.gemm + self.attention + self.weight_load + self.kv_load - self.overlapped
            + self.allreduce
            + self.alltoall
            + self.pp_bubble
    }

    fn add(&mut self, other: &Breakdown) {
        self.gemm += other.gemm;
        self.attention += other.attention;
        self.weight_load += other.weight_load;
        self.kv_load += other.kv_load;
        self.allreduce += other.allreduce;
        self.alltoall += other.alltoall;
        self.pp_bubble += other.pp_bubble;
        self.overlapped += other.overlapped;
    }

    fn scale(&self, k: f64) -> Breakdown {
        Breakdown {
            gemm: self.gemm * k,
            attention: self.attention * k,
            weight_load: self.weight_load * k,
            kv_load: self.kv_load * k,
            allreduce: self.allreduce * k,
            alltoall: self.alltoall * k,
            pp_bubble: self.pp_bubble * k,
            overlapped: self.overlapped * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Prefill,
    Decode,
}

/// Estimated performance of one phase under one (mapping, batch) choice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePerf {
    pub phase: Phase,
    /// FTL for prefill; per-token TTL for decode.
    pub latency: f64,
    /// requests/second/GPU. For decode this is the request-completion rate
    /// `per_gpu_token_rate / (osl - 1)`.
    pub per_gpu_request_rate: f64,
    /// tokens/second/GPU. For prefill this counts processed prompt tokens.
    pub per_gpu_token_rate: f64,
    pub batch: u64,
    pub mapping: ParallelismMapping,
    pub hbm_used: f64,
    pub breakdown: Breakdown,
}

/// One co-located operating point (piggybacked iff `chunk_tokens` is set).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColocatedPoint {
    pub mapping: ParallelismMapping,
    pub batch: u64,
    pub chunk_tokens: Option<u64>,
    pub ttl_effective: f64,
    pub ftl_effective: f64,
    pub per_gpu_token_rate: f64,
    pub piggybacked: bool,
    /// MLA chunk-KV reuse policy this point was costed with.
    pub mla_reuse: bool,
    pub hbm_used: f64,
    pub breakdown: Breakdown,
}

/// Token composition of one engine iteration, the unit the simulator and the
/// analytical model share. Prefill work is described per stream (one stream
/// per request currently being prompt-processed) so the quadratic attention
/// term scales correctly with batching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMix {
    /// Decode tokens in the iteration (one per active request; fractional
    /// values express steady-state averages).
    pub decode_tokens: f64,
    /// Mean KV context length behind each decode token.
    pub decode_context: f64,
    /// Requests contributing prefill tokens this iteration.
    pub prefill_streams: u64,
    /// Total new prompt tokens fed this iteration, across all streams.
    pub prefill_tokens: u64,
    /// Mean prompt tokens already cached per stream.
    pub prefill_prior: f64,
    /// Cache up-projected MLA chunk KV instead of recomputing it.
    pub mla_reuse: bool,
}

impl BatchMix {
    pub fn decode_only(tokens: f64, context: f64) -> Self {
        BatchMix {
            decode_tokens: tokens,
            decode_context: context,
            prefill_streams: 0,
            prefill_tokens: 0,
            prefill_prior: 0.0,
            mla_reuse: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Shared per-mapping quantities
// ---------------------------------------------------------------------------

struct MappingCosts<'a> {
    model: &'a ModelArch,
    hw: &'a HardwareSpec,
    mapping: &'a ParallelismMapping,
    width: f64,
    stages: f64,
    dup: f64,
}

impl<'a> MappingCosts<'a> {
    fn new(model: &'a ModelArch, hw: &'a HardwareSpec, mapping: &'a ParallelismMapping) -> Self {
        MappingCosts {
            model,
            hw,
            mapping,
            width: f64::from(mapping.stage_width()),
            stages: f64::from(mapping.pp_stages),
            dup: duplication_factor(mapping, model),
        }
    }

    fn gpus(&self) -> f64 {
        f64::from(self.mapping.gpus())
    }

    /// Weight bytes resident on one GPU (its pipeline-stage share).
    /// Attention weights shard by the TP degree (full copy under DP), FFN
    /// weights by the FFN width; embeddings are spread over all GPUs.
    fn weight_bytes_per_gpu(&self) -> f64 {
        let m = self.model;
        let layers_per_stage = m.num_layers as f64 / self.stages;
        let attn = m.attn_params_per_layer() as f64 / f64::from(self.mapping.attn_tp_degree());
        let ffn_width = match self.mapping.ffn_shard {
            FfnShard::TensorParallel(t) => f64::from(t),
            FfnShard::ExpertParallel(e) => f64::from(e),
        };
        let ffn = m.ffn_params_per_layer() as f64 / ffn_width;
        let emb = m.embedding_params() as f64 / self.gpus();
        (layers_per_stage * (attn + ffn) + emb) * m.weight_bytes_per_param
    }

    /// Unique-shard KV bytes per GPU for `tokens` of context (whole model).
    fn kv_bytes_per_gpu(&self, tokens: f64) -> f64 {
        tokens * self.model.num_layers as f64 * self.model.kv_bytes_per_token_per_layer * self.dup
            / self.gpus()
    }

    /// Dense projection + FFN flops for one token through one layer.
    fn gemm_flops_per_token_layer(&self) -> f64 {
        2.0 * (self.model.attn_params_per_layer() as f64
            + self.model.ffn_active_params_per_layer() as f64)
    }

    /// Attention score/value flops for one stream processing `new_tokens`
    /// over `prior` cached tokens in one layer:
    /// `4 * Hq * width * (S*P + S^2/2)` — quadratic in the processed
    /// sequence with the causal factor 1/2.
    fn attn_score_flops_layer(&self, new_tokens: f64, prior: f64) -> f64 {
        4.0 * self.model.num_q_heads as f64
            * self.model.attn_score_width() as f64
            * (new_tokens * prior + 0.5 * new_tokens * new_tokens)
    }

    /// MLA chunked-prefill re-projection flops in one layer: the KV
    /// up-projection re-run over all previously cached chunk tokens.
    fn mla_reprojection_flops_layer(&self, prior_tokens: f64) -> f64 {
        match self.model.attention {
            AttentionKind::Gqa => 0.0,
            AttentionKind::Mla { latent_dim } => {
                let up_params =
                    latent_dim as f64 * 2.0 * (self.model.num_q_heads * self.model.d_head) as f64;
                2.0 * up_params * prior_tokens
            }
        }
    }

    fn allreduce_time(&self, data_bytes: f64, n: u32) -> f64 {
        if n <= 1 {
            return 0.0;
        }
        let nf = f64::from(n);
        let steps = 2.0 * (nf.log2().ceil());
        data_bytes * 2.0 * (nf - 1.0) / nf / self.hw.nvlink_bw_per_gpu
            + self.hw.per_message_latency * steps
    }

    fn alltoall_time(&self, send_bytes_per_gpu: f64, n: u32) -> f64 {
        if n <= 1 {
            return 0.0;
        }
        let nf = f64::from(n);
        send_bytes_per_gpu * (nf - 1.0) / nf / self.hw.nvlink_bw_per_gpu
            + self.hw.per_message_latency
    }

    /// Communication time spent in one layer for `tokens` activations.
    fn layer_comm(&self, tokens: f64) -> (f64, f64) {
        let m = self.model;
        let act = m.activation_bytes;
        let h = m.hidden_dim as f64;
        let mut allreduce = 0.0;
        let mut alltoall = 0.0;
        // Attention TP allreduce over each group's token slice.
        if let AttnShard::TensorParallel(t) = self.mapping.attn_shard {
            if t > 1 {
                let group_tokens = tokens * f64::from(t) / self.width;
                allreduce += self.allreduce_time(group_tokens * h * act, t);
            }
        }
        match self.mapping.ffn_shard {
            FfnShard::TensorParallel(t) => {
                if t > 1 {
                    let group_tokens = tokens * f64::from(t) / self.width;
                    allreduce += self.allreduce_time(group_tokens * h * act, t);
                }
            }
            FfnShard::ExpertParallel(e) => {
                if e > 1 {
                    let top_k = match m.ffn {
                        FfnKind::Moe { top_k, .. } => top_k as f64,
                        FfnKind::Dense { .. } => 1.0,
                    };
                    // dispatch + combine
                    let send = tokens / self.width * top_k * h * act;
                    alltoall += 2.0 * self.alltoall_time(send, e);
                }
            }
        }
        (allreduce, alltoall)
    }

    /// Activation hand-off to the next pipeline stage.
    fn pp_send_time(&self, tokens: f64) -> f64 {
        if self.mapping.pp_stages <= 1 {
            return 0.0;
        }
        let bw = if self.mapping.gpus() > self.hw.nvlink_domain_size {
            self.hw.scaleout_bw_per_gpu
        } else {
            self.hw.nvlink_bw_per_gpu
        };
        let bytes = tokens * self.model.hidden_dim as f64 * self.model.activation_bytes / self.width;
        bytes / bw + self.hw.per_message_latency
    }

    /// Roofline time for one pipeline stage processing `mix`.
    fn stage_time(&self, mix: &BatchMix) -> Breakdown {
        debug_assert!(mix.prefill_tokens == 0 || mix.prefill_streams >= 1);
        let layers_per_stage = self.model.num_layers as f64 / self.stages;
        let peak = self.hw.flops_dense * self.hw.compute_efficiency;

        let dec = mix.decode_tokens;
        let pre = mix.prefill_tokens as f64;
        let streams = mix.prefill_streams as f64;
        let per_stream = if mix.prefill_tokens > 0 { pre / streams } else { 0.0 };
        let tokens = dec + pre;

        // Compute terms.
        let mut gemm_flops = tokens * self.gemm_flops_per_token_layer();
        if mix.prefill_tokens > 0 && !mix.mla_reuse {
            gemm_flops += streams * self.mla_reprojection_flops_layer(mix.prefill_prior);
        }
        // One decode token attends over its whole context: 4*Hq*W*ctx.
        let mut attn_flops = dec
            * 4.0
            * self.model.num_q_heads as f64
            * self.model.attn_score_width() as f64
            * mix.decode_context;
        if mix.prefill_tokens > 0 {
            attn_flops += streams * self.attn_score_flops_layer(per_stream, mix.prefill_prior);
        }
        let gemm = layers_per_stage * gemm_flops / self.width / peak;
        let attention = layers_per_stage * attn_flops / self.width / peak;

        // Memory terms: stage weights once per iteration, plus the KV context
        // read behind every token and the newly written KV.
        let weight_load = self.weight_bytes_per_gpu() / self.hw.hbm_bandwidth;
        let kv_ptl = self.model.kv_bytes_per_token_per_layer;
        let kv_read = dec * mix.decode_context + streams * mix.prefill_prior;
        let kv_bytes = (kv_read + tokens) * kv_ptl * layers_per_stage * self.dup / self.width;
        let kv_load = kv_bytes / self.hw.hbm_bandwidth;

        let compute = gemm + attention;
        let memory = weight_load + kv_load;
        let overlapped = compute.min(memory);

        let (allreduce, alltoall) = self.layer_comm(tokens);
        let pp = self.pp_send_time(tokens);

        Breakdown {
            gemm,
            attention,
            weight_load,
            kv_load,
            allreduce: layers_per_stage * allreduce,
            alltoall: layers_per_stage * alltoall,
            pp_bubble: pp,
            overlapped,
        }
    }
}

// ---------------------------------------------------------------------------
// Estimates
// ---------------------------------------------------------------------------

fn check_mapping(
    model: &ModelArch,
    hw: &HardwareSpec,
    mapping: &ParallelismMapping,
) -> Result<(), PerfError> {
    let rebuilt = ParallelismMapping::new(
        mapping.attn_shard,
        mapping.ffn_shard,
        mapping.pp_stages,
        mapping.cpp_chunk_tokens,
        model,
        hw,
    )?;
    debug_assert_eq!(rebuilt, *mapping);
    Ok(())
}

/// One full iteration (all pipeline stages) for an arbitrary batch mix.
/// This is the cost callback the discrete-event simulator drives.
pub fn iteration_time(
    model: &ModelArch,
    hw: &HardwareSpec,
    mapping: &ParallelismMapping,
    mix: &BatchMix,
) -> Breakdown {
    let costs = MappingCosts::new(model, hw, mapping);
    let stage = costs.stage_time(mix);
    stage.scale(costs.stages)
}

/// Prefill estimate: chunked (or single-pass) pipeline over `isl` tokens.
pub fn estimate_prefill(
    model: &ModelArch,
    hw: &HardwareSpec,
    mapping: &ParallelismMapping,
    batch: u64,
    isl: u64,
) -> Result<Feasibility<PhasePerf>, PerfError> {
    check_mapping(model, hw, mapping)?;
    if batch == 0 {
        return Err(PerfError::ZeroBatch);
    }
    if isl == 0 {
        return Err(PerfError::ZeroIsl);
    }
    let chunk = match mapping.cpp_chunk_tokens {
        Some(0) => return Err(PerfError::ZeroChunk),
        Some(c) => c.min(isl),
        None => isl,
    };

    let costs = MappingCosts::new(model, hw, mapping);

    let hbm_used = costs.weight_bytes_per_gpu() + batch as f64 * costs.kv_bytes_per_gpu(isl as f64);
    if hbm_used > hw.hbm_capacity {
        return Ok(Feasibility::Infeasible(Infeasibility {
            hbm_required: hbm_used,
            hbm_capacity: hw.hbm_capacity,
        }));
    }

    // Per-chunk stage times (stages are balanced, chunks are not: later
    // chunks attend over more context).
    let mut stage_times = Vec::new();
    let mut work = Breakdown::default();
    let mut done = 0u64;
    while done < isl {
        let tokens = chunk.min(isl - done);
        let mix = BatchMix {
            decode_tokens: 0.0,
            decode_context: 0.0,
            prefill_streams: batch,
            prefill_tokens: batch * tokens,
            prefill_prior: done as f64,
            mla_reuse: true, // standalone prefill keeps chunk KV cached
        };
        let stage = costs.stage_time(&mix);
        work.add(&stage);
        stage_times.push(stage.latency());
        done += tokens;
    }

    // Pipeline completion time: f(k, s) = max(f(k-1, s), f(k, s-1)) + t_k.
    let stages = mapping.pp_stages as usize;
    let mut finish = vec![0.0f64; stages];
    for &t in &stage_times {
        for s in 0..stages {
            let prev_stage = if s == 0 { 0.0 } else { finish[s - 1] };
            finish[s] = finish[s].max(prev_stage) + t;
        }
    }
    let latency_total = finish[stages - 1];
    let sequential: f64 = stage_times.iter().sum();

    let mut breakdown = work;
    breakdown.pp_bubble += latency_total - sequential;
    let latency = breakdown.latency();

    let gpus = costs.gpus();
    let per_gpu_request_rate = batch as f64 / (latency * gpus);
    let per_gpu_token_rate = (batch * isl) as f64 / (latency * gpus);

    Ok(Feasibility::Feasible(PhasePerf {
        phase: Phase::Prefill,
        latency,
        per_gpu_request_rate,
        per_gpu_token_rate,
        batch,
        mapping: *mapping,
        hbm_used,
        breakdown,
    }))
}

/// Decode estimate: one token step per active request, context evaluated at
/// the median of the generation (`isl + osl/2`).
pub fn estimate_decode(
    model: &ModelArch,
    hw: &HardwareSpec,
    mapping: &ParallelismMapping,
    batch: u64,
    isl: u64,
    osl: u64,
) -> Result<Feasibility<PhasePerf>, PerfError> {
    check_mapping(model, hw, mapping)?;
    if batch == 0 {
        return Err(PerfError::ZeroBatch);
    }
    if isl == 0 {
        return Err(PerfError::ZeroIsl);
    }
    if osl < 2 {
        return Err(PerfError::OslTooSmall);
    }

    let costs = MappingCosts::new(model, hw, mapping);
    let hbm_used = costs.weight_bytes_per_gpu()
        + batch as f64 * costs.kv_bytes_per_gpu((isl + osl) as f64);
    if hbm_used > hw.hbm_capacity {
        return Ok(Feasibility::Infeasible(Infeasibility {
            hbm_required: hbm_used,
            hbm_capacity: hw.hbm_capacity,
        }));
    }

    let context = isl as f64 + osl as f64 / 2.0;
    let mix = BatchMix::decode_only(batch as f64, context);
    let breakdown = iteration_time(model, hw, mapping, &mix);
    let latency = breakdown.latency();

    let gpus = costs.gpus();
    let per_gpu_token_rate = batch as f64 / (latency * gpus);
    let per_gpu_request_rate = per_gpu_token_rate / (osl - 1) as f64;

    Ok(Feasibility::Feasible(PhasePerf {
        phase: Phase::Decode,
        latency,
        per_gpu_request_rate,
        per_gpu_token_rate,
        batch,
        mapping: *mapping,
        hbm_used,
        breakdown,
    }))
}

/// Co-located estimate.
///
/// Piggybacked (`chunk_tokens` set): one request's prompt is chunk-fed over
/// `ceil(isl/chunk)` consecutive iterations while admitted requests decode,
/// so `ftl_effective` is that many chunk-carrying iterations. At steady
/// state a chunk rides along only while admissions demand it: the feed
/// fraction is `phi = min(1, batch*isl / ((osl-1)*chunk))` and
/// `ttl_effective` blends chunk-carrying and plain decode iterations by
/// `phi`. Admissions are bounded by whichever of the decode drain
/// (`batch/(osl-1)`) and the prefill feed (`chunk/isl`) is scarcer, and the
/// steady-state decode occupancy follows the same bound.
///
/// Non-piggybacked: whole prefills stall decode; one full-batch prefill is
/// amortized over the `osl - 1` decode steps it admits, so
/// `ttl_effective = t_decode + t_prefill_full / (osl - 1)`.
pub fn estimate_colocated(
    model: &ModelArch,
    hw: &HardwareSpec,
    mapping: &ParallelismMapping,
    batch: u64,
    chunk_tokens: Option<u64>,
    isl: u64,
    osl: u64,
    mla_reuse: bool,
) -> Result<Feasibility<ColocatedPoint>, PerfError> {
    check_mapping(model, hw, mapping)?;
    if batch == 0 {
        return Err(PerfError::ZeroBatch);
    }
    if isl == 0 {
        return Err(PerfError::ZeroIsl);
    }
    if osl < 2 {
        return Err(PerfError::OslTooSmall);
    }
    if chunk_tokens == Some(0) {
        return Err(PerfError::ZeroChunk);
    }

    let costs = MappingCosts::new(model, hw, mapping);
    let gpus = costs.gpus();
    let decode_context = isl as f64 + osl as f64 / 2.0;

    match chunk_tokens {
        Some(chunk) => {
            let chunk = chunk.min(isl);
            let num_chunks = isl.div_ceil(chunk);

            let mut hbm_used = costs.weight_bytes_per_gpu()
                + batch as f64 * costs.kv_bytes_per_gpu((isl + osl) as f64)
                + costs.kv_bytes_per_gpu(isl as f64); // in-flight prefill
            if mla_reuse {
                if let AttentionKind::Mla { .. } = model.attention {
                    // Cached up-projected K/V for the in-flight prompt.
                    let cache = isl as f64
                        * 2.0
                        * (model.num_q_heads * model.d_head) as f64
                        * model.activation_bytes
                        * model.num_layers as f64
                        * costs.dup
                        / gpus;
                    hbm_used += cache;
                }
            }
            if hbm_used > hw.hbm_capacity {
                return Ok(Feasibility::Infeasible(Infeasibility {
                    hbm_required: hbm_used,
                    hbm_capacity: hw.hbm_capacity,
                }));
            }

            // Steady-state decode occupancy: admissions can't outrun the
            // chunk feed, so slots hold min(batch, (osl-1)*chunk/isl).
            let drain = batch as f64 / (osl - 1) as f64;
            let feed = chunk as f64 / isl as f64;
            let occupancy = (batch as f64).min((osl - 1) as f64 * feed);

            // Chunk-carrying iteration: one mid-prefill stream (mean cached
            // context (isl - chunk)/2) rides along with the decode batch.
            let chunk_mix = BatchMix {
                decode_tokens: occupancy,
                decode_context,
                prefill_streams: 1,
                prefill_tokens: chunk,
                prefill_prior: (isl - chunk) as f64 / 2.0,
                mla_reuse,
            };
            let chunk_bd = iteration_time(model, hw, mapping, &chunk_mix);
            let iter_chunk = chunk_bd.latency();

            // A chunk rides along only while admissions demand it.
            let phi = (drain / feed).min(1.0);
            let plain_bd =
                iteration_time(model, hw, mapping, &BatchMix::decode_only(occupancy, decode_context));
            let mut breakdown = chunk_bd.scale(phi);
            breakdown.add(&plain_bd.scale(1.0 - phi));
            let ttl_effective = breakdown.latency();

            let completions_per_iter = drain.min(feed);
            let per_gpu_token_rate = completions_per_iter * osl as f64 / (ttl_effective * gpus);

            Ok(Feasibility::Feasible(ColocatedPoint {
                mapping: *mapping,
                batch,
                chunk_tokens: Some(chunk),
                ttl_effective,
                ftl_effective: num_chunks as f64 * iter_chunk,
                per_gpu_token_rate,
                piggybacked: true,
                mla_reuse,
                hbm_used,
                breakdown,
            }))
        }
        None => {
            let hbm_used = costs.weight_bytes_per_gpu()
                + batch as f64 * costs.kv_bytes_per_gpu((isl + osl) as f64);
            if hbm_used > hw.hbm_capacity {
                return Ok(Feasibility::Infeasible(Infeasibility {
                    hbm_required: hbm_used,
                    hbm_capacity: hw.hbm_capacity,
                }));
            }

            let decode_mix = BatchMix::decode_only(batch as f64, decode_context);
            let decode_bd = iteration_time(model, hw, mapping, &decode_mix);

            // Full-batch prefill pass (all pipeline stages, one chunk).
            let prefill_mix = BatchMix {
                decode_tokens: 0.0,
                decode_context: 0.0,
                prefill_streams: batch,
                prefill_tokens: batch * isl,
                prefill_prior: 0.0,
                mla_reuse: true,
            };
            let prefill_bd = iteration_time(model, hw, mapping, &prefill_mix);
            let t_prefill_full = prefill_bd.latency();

            let amortized = prefill_bd.scale(1.0 / (osl - 1) as f64);
            let mut breakdown = decode_bd;
            breakdown.add(&amortized);
            let ttl_effective = breakdown.latency();

            let per_gpu_token_rate =
                batch as f64 * osl as f64 / ((osl - 1) as f64 * ttl_effective * gpus);

            Ok(Feasibility::Feasible(ColocatedPoint {
                mapping: *mapping,
                batch,
                chunk_tokens: None,
                ttl_effective,
                ftl_effective: t_prefill_full,
                per_gpu_token_rate,
                piggybacked: false,
                mla_reuse: false,
                hbm_used,
                breakdown,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{AttnShard, FfnKind, FfnShard};

    fn desk_model() -> ModelArch {
        ModelArch {
            name: "desk-gqa".into(),
            num_layers: 32,
            hidden_dim: 4096,
            num_q_heads: 32,
            d_head: 128,
            num_kv_heads: 8,
            attention: AttentionKind::Gqa,
            ffn: FfnKind::Dense { inter_dim: 14336 },
            vocab_size: 128256,
            weight_bytes_per_param: 0.5,
            kv_bytes_per_token_per_layer: 2.0 * 128.0 * 8.0 * 1.0,
            activation_bytes: 2.0,
            tie_embeddings: false,
        }
    }

    fn desk_hw() -> HardwareSpec {
        HardwareSpec {
            flops_dense: 2.5e15,
            hbm_bandwidth: 8e12,
            hbm_capacity: 192e9,
            nvlink_domain_size: 64,
            nvlink_bw_per_gpu: 900e9,
            scaleout_bw_per_gpu: 50e9,
            per_message_latency: 1e-7,
            compute_efficiency: 0.8,
        }
    }

    fn tp(t: u32, pp: u32, chunk: Option<u64>) -> ParallelismMapping {
        ParallelismMapping::new(
            AttnShard::TensorParallel(t),
            FfnShard::TensorParallel(t),
            pp,
            chunk,
            &desk_model(),
            &desk_hw(),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_pipeline_breakdown_sums_to_latency() {
        let m = desk_model();
        let hw = desk_hw();
        let perf = estimate_prefill(&m, &hw, &tp(4, 1, None), 1, 4096)
            .unwrap()
            .expect_feasible("prefill");
        assert_eq!(perf.breakdown.pp_bubble, 0.0);
        assert_eq!(perf.breakdown.latency(), perf.latency);
        assert!(perf.latency > 0.0);
    }

    #[test]
    fn throughput_identities_hold_exactly() {
        let m = desk_model();
        let hw = desk_hw();
        let mapping = tp(8, 2, Some(1024));
        let p = estimate_prefill(&m, &hw, &mapping, 4, 8192)
            .unwrap()
            .expect_feasible("prefill");
        let g = f64::from(mapping.gpus());
        assert_eq!(p.per_gpu_request_rate, 4.0 / (p.latency * g));

        let d = estimate_decode(&m, &hw, &mapping, 32, 1024, 128)
            .unwrap()
            .expect_feasible("decode");
        assert_eq!(d.per_gpu_token_rate, 32.0 / (d.latency * g));
        assert_eq!(d.per_gpu_request_rate, d.per_gpu_token_rate / 127.0);
    }

    #[test]
    fn prefill_latency_monotone_in_isl_and_batch() {
        let m = desk_model();
        let hw = desk_hw();
        let mapping = tp(8, 1, None);
        let mut last = 0.0;
        for isl in [512u64, 1024, 2048, 4096, 8192] {
            let perf = estimate_prefill(&m, &hw, &mapping, 2, isl)
                .unwrap()
                .expect_feasible("prefill");
            assert!(perf.latency >= last, "latency not monotone in isl");
            last = perf.latency;
        }
        let mut last = 0.0;
        for batch in [1u64, 2, 4, 8] {
            let perf = estimate_prefill(&m, &hw, &mapping, batch, 2048)
                .unwrap()
                .expect_feasible("prefill");
            assert!(perf.latency >= last, "latency not monotone in batch");
            last = perf.latency;
        }
    }

    #[test]
    fn doubling_flops_halves_compute_bound_latency() {
        let m = desk_model();
        let mut hw = desk_hw();
        // Make memory and comm negligible.
        hw.hbm_bandwidth = 1e30;
        hw.nvlink_bw_per_gpu = 1e30;
        hw.per_message_latency = 0.0;
        let mapping = tp(4, 1, None);
        let base = estimate_prefill(&m, &hw, &mapping, 1, 8192)
            .unwrap()
            .expect_feasible("prefill");
        hw.flops_dense *= 2.0;
        let fast = estimate_prefill(&m, &hw, &mapping, 1, 8192)
            .unwrap()
            .expect_feasible("prefill");
        let ratio = base.latency / fast.latency;
        assert!((ratio - 2.0).abs() < 1e-9, "ratio {ratio}");
    }

    #[test]
    fn decode_bandwidth_bound_ttl_approaches_weight_load() {
        let m = desk_model();
        let mut hw = desk_hw();
        hw.flops_dense = 1e30;
        hw.nvlink_bw_per_gpu = 1e30;
        hw.per_message_latency = 0.0;
        let mapping = tp(8, 1, None);
        let d = estimate_decode(&m, &hw, &mapping, 1, 128, 16)
            .unwrap()
            .expect_feasible("decode");
        // Weight streaming dominates: latency within a few percent of the
        // pure weight-load term, and weight-load is the largest component.
        assert!(d.breakdown.weight_load > d.breakdown.kv_load);
        assert!(d.breakdown.weight_load > d.breakdown.gemm + d.breakdown.attention);
        assert!(d.latency <= d.breakdown.weight_load * 1.05);
    }

    #[test]
    fn tp_sweep_has_interior_ttl_minimum_for_large_message_latency() {
        let m = desk_model();
        let mut hw = desk_hw();
        hw.per_message_latency = 5e-7;
        let mut ttls = Vec::new();
        for t in [1u32, 2, 4, 8, 16, 32] {
            let mapping = tp(t, 1, None);
            let d = estimate_decode(&m, &hw, &mapping, 8, 4096, 512)
                .unwrap()
                .expect_feasible("decode");
            ttls.push((t, d.latency));
        }
        let min = ttls
            .iter()
            .cloned()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(
            min.0 > 1 && min.0 < 32,
            "expected interior TTL minimum, got TP{} in {ttls:?}",
            min.0
        );
        // Past the minimum the allreduce latency term dominates.
        assert!(ttls.last().unwrap().1 > min.1);
    }

    #[test]
    fn decode_hbm_monotone_in_batch_and_sequence() {
        let m = desk_model();
        let hw = desk_hw();
        let mapping = tp(8, 1, None);
        let h = |batch, isl, osl| {
            estimate_decode(&m, &hw, &mapping, batch, isl, osl)
                .unwrap()
                .expect_feasible("decode")
                .hbm_used
        };
        assert!(h(2, 1024, 128) > h(1, 1024, 128));
        assert!(h(1, 2048, 128) > h(1, 1024, 128));
        assert!(h(1, 1024, 256) > h(1, 1024, 128));
    }

    #[test]
    fn memory_infeasible_batches_are_marked_not_errors() {
        let m = desk_model();
        let mut hw = desk_hw();
        hw.hbm_capacity = 1e9;
        let out = estimate_decode(&m, &hw, &tp(1, 1, None), 1024, 16384, 2048).unwrap();
        assert!(!out.is_feasible());
    }

    #[test]
    fn homogeneity_in_hardware_rates() {
        // With zero fixed message latency, scaling every rate by k scales
        // latencies by 1/k and throughputs by k.
        let m = desk_model();
        let mut hw = desk_hw();
        hw.per_message_latency = 0.0;
        let mapping = tp(8, 2, Some(512));
        let base = estimate_prefill(&m, &hw, &mapping, 2, 4096)
            .unwrap()
            .expect_feasible("prefill");
        let k = 3.0;
        let mut scaled = hw.clone();
        scaled.flops_dense *= k;
        scaled.hbm_bandwidth *= k;
        scaled.nvlink_bw_per_gpu *= k;
        scaled.scaleout_bw_per_gpu *= k;
        let fast = estimate_prefill(&m, &scaled, &mapping, 2, 4096)
            .unwrap()
            .expect_feasible("prefill");
        assert!((fast.latency * k / base.latency - 1.0).abs() < 1e-9);
        assert!((fast.per_gpu_request_rate / (base.per_gpu_request_rate * k) - 1.0).abs() < 1e-9);

        let dbase = estimate_decode(&m, &hw, &mapping, 16, 1024, 128)
            .unwrap()
            .expect_feasible("decode");
        let dfast = estimate_decode(&m, &scaled, &mapping, 16, 1024, 128)
            .unwrap()
            .expect_feasible("decode");
        assert!((dfast.latency * k / dbase.latency - 1.0).abs() < 1e-9);
    }

    #[test]
    fn colocated_single_chunk_degenerates() {
        let m = desk_model();
        let hw = desk_hw();
        let mapping = tp(8, 1, None);
        let pig = estimate_colocated(&m, &hw, &mapping, 8, Some(1024), 1024, 256, false)
            .unwrap()
            .expect_feasible("coloc");
        assert!(pig.piggybacked);
        // One chunk: the first token lands after exactly one chunk-carrying
        // iteration.
        let occupancy = (8f64).min(255.0 * 1024.0 / 1024.0);
        let chunk_mix = BatchMix {
            decode_tokens: occupancy,
            decode_context: 1024.0 + 128.0,
            prefill_streams: 1,
            prefill_tokens: 1024,
            prefill_prior: 0.0,
            mla_reuse: false,
        };
        let iter_chunk = iteration_time(&m, &hw, &mapping, &chunk_mix).latency();
        assert!((pig.ftl_effective - iter_chunk).abs() < 1e-15);
        assert!(pig.ftl_effective >= pig.ttl_effective);

        let non = estimate_colocated(&m, &hw, &mapping, 8, None, 1024, 256, false)
            .unwrap()
            .expect_feasible("coloc");
        assert!(!non.piggybacked);
        assert_eq!(non.chunk_tokens, None);
        // Same token accounting scheme: rates agree within the stall model.
        let ratio = pig.per_gpu_token_rate / non.per_gpu_token_rate;
        assert!(ratio > 0.5 && ratio < 2.0, "ratio {ratio}");
    }

    #[test]
    fn mla_chunking_overhead_vanishes_with_reuse() {
        let mut m = desk_model();
        m.attention = AttentionKind::Mla { latent_dim: 512 };
        m.kv_bytes_per_token_per_layer = 512.0;
        let hw = desk_hw();
        let mapping = ParallelismMapping::new(
            AttnShard::TensorParallel(8),
            FfnShard::TensorParallel(8),
            1,
            None,
            &m,
            &hw,
        )
        .unwrap();
        // Four chunks, reuse off: re-projection inflates the iteration.
        let off = estimate_colocated(&m, &hw, &mapping, 8, Some(1024), 4096, 256, false)
            .unwrap()
            .expect_feasible("coloc");
        let on = estimate_colocated(&m, &hw, &mapping, 8, Some(1024), 4096, 256, true)
            .unwrap()
            .expect_feasible("coloc");
        assert!(off.breakdown.gemm > on.breakdown.gemm);
        assert!(off.ttl_effective >= on.ttl_effective);
        // Reuse trades HBM for compute.
        assert!(on.hbm_used > off.hbm_used);

        // Single chunk: nothing cached yet, no re-projection to save.
        let off1 = estimate_colocated(&m, &hw, &mapping, 8, Some(4096), 4096, 256, false)
            .unwrap()
            .expect_feasible("coloc");
        let on1 = estimate_colocated(&m, &hw, &mapping, 8, Some(4096), 4096, 256, true)
            .unwrap()
            .expect_feasible("coloc");
        assert_eq!(off1.breakdown.gemm, on1.breakdown.gemm);
    }

    #[test]
    fn invalid_mapping_is_an_error() {
        let dense = desk_model();
        let moe = ModelArch {
            ffn: FfnKind::Moe {
                num_experts: 16,
                top_k: 2,
                expert_inter_dim: 4096,
            },
            ..desk_model()
        };
        let hw = desk_hw();
        let mapping = ParallelismMapping::new(
            AttnShard::DataParallel,
            FfnShard::ExpertParallel(8),
            1,
            None,
            &moe,
            &hw,
        )
        .unwrap();
        // Same mapping against the dense model must be rejected.
        let err = estimate_decode(&dense, &hw, &mapping, 1, 128, 16).unwrap_err();
        assert_eq!(
            err,
            PerfError::Mapping(MappingError::ExpertParallelOnDense)
        );
    }
}
