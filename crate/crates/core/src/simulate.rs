//! Discrete-event, request-level serving simulator.
//!
//! The simulator validates the analytical estimates: it owns scheduling and
//! queueing only, while every iteration cost comes from
//! [`perfmodel::iteration_time`] on the actual batch composition, so
//! agreement tests exercise the scheduling model rather than a second cost
//! model.
//!
//! Granularity is one engine iteration. Co-located mode supports in-flight
//! batching with either whole-prompt prefills that stall decode or
//! piggybacked chunk feeding. Disaggregated mode runs separate prefill and
//! decode pools connected by layer-pipelined KV transfers; a request may not
//! decode before its KV has landed, and its first token is counted when the
//! KV hand-off completes. Arrival times of sampled (closed-loop) traffic are
//! all zero: the pools admit work as capacity frees, which realizes the
//! saturation assumption.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::kvbw::kv_sharding_width;
use crate::par::map_collect;
use crate::perfmodel::{iteration_time, BatchMix, ColocatedPoint};
use crate::ratematch::DeploymentPoint;
use crate::workload::{HardwareSpec, ModelArch, TrafficPattern};

/// One serving request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Request {
    pub id: u64,
    pub arrival_time: f64,
    pub isl: u64,
    pub osl: u64,
}

/// Timing record of one request after simulation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RequestRecord {
    pub id: u64,
    pub arrival_time: f64,
    pub isl: u64,
    pub osl: u64,
    /// When prefill service began.
    pub service_start: Option<f64>,
    /// First token availability (end of prefill; in disaggregated mode, end
    /// of the KV hand-off).
    pub first_token_time: Option<f64>,
    pub finish_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EventCounts {
    pub iterations: u64,
    pub prefill_batches: u64,
    pub kv_transfers: u64,
    pub admissions: u64,
}

/// Simulation outcome. Deterministic for a given (config, seed): identical
/// runs produce identical values, records, and serialization.
#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub throughput_tokens_per_sec_per_gpu: f64,
    pub p50_ftl: f64,
    pub p50_ttl: f64,
    pub ttl_mean: f64,
    pub ttl_variance: f64,
    pub completed: u64,
    pub total_tokens_completed: u64,
    pub gpus: u64,
    pub measured_end: f64,
    pub warmup: f64,
    pub prefill_utilization: Option<f64>,
    pub decode_utilization: Option<f64>,
    pub zero_completions: bool,
    pub event_counts: EventCounts,
    pub records: Vec<RequestRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Parse a `arrival_time,isl,osl` CSV trace (no header). Errors carry the
/// 1-based line number.
pub fn parse_trace(text: &str) -> Result<Vec<Request>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(TraceError::Malformed {
                line,
                reason: format!("expected 3 fields (arrival_time,isl,osl), got {}", fields.len()),
            });
        }
        let arrival_time: f64 = fields[0].parse().map_err(|e| TraceError::Malformed {
            line,
            reason: format!("bad arrival_time: {e}"),
        })?;
        let isl: u64 = fields[1].parse().map_err(|e| TraceError::Malformed {
            line,
            reason: format!("bad isl: {e}"),
        })?;
        let osl: u64 = fields[2].parse().map_err(|e| TraceError::Malformed {
            line,
            reason: format!("bad osl: {e}"),
        })?;
        if arrival_time < 0.0 || isl < 1 || osl < 2 {
            return Err(TraceError::Malformed {
                line,
                reason: "need arrival_time >= 0, isl >= 1, osl >= 2".into(),
            });
        }
        out.push(Request {
            id: out.len() as u64,
            arrival_time,
            isl,
            osl,
        });
    }
    Ok(out)
}

/// Deterministically sample `n` closed-loop requests (all arrivals at zero;
/// the engines admit them as capacity frees).
pub fn sample_traffic(pattern: &TrafficPattern, n: usize, seed: u64) -> Vec<Request> {
    assert!(n >= 1, "n must be >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match pattern {
        TrafficPattern::Static { isl, osl, .. } => (0..n)
            .map(|i| Request {
                id: i as u64,
                arrival_time: 0.0,
                isl: *isl,
                osl: *osl,
            })
            .collect(),
        TrafficPattern::Empirical { samples, .. } => {
            let index = WeightedIndex::new(samples.iter().map(|s| s.weight))
                .expect("validated weights");
            (0..n)
                .map(|i| {
                    let s = samples[index.sample(&mut rng)];
                    Request {
                        id: i as u64,
                        arrival_time: 0.0,
                        isl: s.isl,
                        osl: s.osl,
                    }
                })
                .collect()
        }
    }
}

/// Nearest power of two; exact midpoints round up.
fn nearest_pow2(x: u64) -> u64 {
    debug_assert!(x >= 1);
    let below = 1u64 << (63 - x.leading_zeros());
    if below == x {
        return x;
    }
    let above = below << 1;
    if x - below < above - x {
        below
    } else {
        above
    }
}

fn weighted_median(mut values: Vec<(u64, f64)>) -> u64 {
    values.sort_by(|a, b| a.0.cmp(&b.0));
    let total: f64 = values.iter().map(|v| v.1).sum();
    let mut acc = 0.0;
    for (v, w) in &values {
        acc += w;
        if acc >= total * 0.5 {
            return *v;
        }
    }
    values.last().expect("non-empty samples").0
}

/// Power-of-two approximation of the P50 (ISL, OSL) of a pattern. Static
/// patterns pass through unchanged.
pub fn p50_pow2(pattern: &TrafficPattern) -> (u64, u64) {
    match pattern {
        TrafficPattern::Static { isl, osl, .. } => (*isl, *osl),
        TrafficPattern::Empirical { samples, .. } => {
            let isl = weighted_median(samples.iter().map(|s| (s.isl, s.weight)).collect());
            let osl = weighted_median(samples.iter().map(|s| (s.osl, s.weight)).collect());
            (nearest_pow2(isl), nearest_pow2(osl))
        }
    }
}

/// The (isl, osl) a pattern is planned at: exact for static traffic, the
/// power-of-two P50 proxy for empirical traffic.
pub fn nominal_lengths(pattern: &TrafficPattern) -> (u64, u64) {
    p50_pow2(pattern)
}

// ---------------------------------------------------------------------------
// Metrics shared by both engines
// ---------------------------------------------------------------------------

/// Timestamped raw measurements; the warm-up cut is applied in `finalize`
/// against the measured span (first 10% excluded), so runs that drain the
/// queue long before the horizon still measure their steady state.
struct Metrics {
    emissions: Vec<f64>,
    ttl_intervals: Vec<(f64, f64)>,
    ftl_samples: Vec<(f64, f64)>,
}

impl Metrics {
    fn new() -> Self {
        Metrics {
            emissions: Vec::new(),
            ttl_intervals: Vec::new(),
            ftl_samples: Vec::new(),
        }
    }

    fn emit_token(&mut self, at: f64) {
        self.emissions.push(at);
    }

    fn ttl_interval(&mut self, at: f64, interval: f64) {
        self.ttl_intervals.push((at, interval));
    }

    fn ftl_sample(&mut self, at: f64, value: f64) {
        self.ftl_samples.push((at, value));
    }
}

fn percentile50(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn finalize(
    metrics: Metrics,
    records: Vec<RequestRecord>,
    gpus: u64,
    measured_end: f64,
    event_counts: EventCounts,
    prefill_utilization: Option<f64>,
    decode_utilization: Option<f64>,
) -> SimResult {
    let completed = records.iter().filter(|r| r.finish_time.is_some()).count() as u64;
    let total_tokens_completed: u64 = records
        .iter()
        .filter(|r| r.finish_time.is_some())
        .map(|r| r.osl)
        .sum();
    let warmup = 0.1 * measured_end;
    let window = measured_end - warmup;
    let emitted = metrics.emissions.iter().filter(|&&t| t > warmup).count();
    let throughput = if window > 0.0 && gpus > 0 {
        emitted as f64 / (window * gpus as f64)
    } else {
        0.0
    };
    let mut ttls: Vec<f64> = metrics
        .ttl_intervals
        .iter()
        .filter(|(t, _)| *t > warmup)
        .map(|(_, v)| *v)
        .collect();
    let mut ftls: Vec<f64> = metrics
        .ftl_samples
        .iter()
        .filter(|(t, _)| *t > warmup)
        .map(|(_, v)| *v)
        .collect();
    let p50_ttl = percentile50(&mut ttls);
    let (ttl_mean, ttl_variance) = mean_var(&ttls);
    let p50_ftl = percentile50(&mut ftls);
    SimResult {
        throughput_tokens_per_sec_per_gpu: throughput,
        p50_ftl,
        p50_ttl,
        ttl_mean,
        ttl_variance,
        completed,
        total_tokens_completed,
        gpus,
        measured_end,
        warmup,
        prefill_utilization,
        decode_utilization,
        zero_completions: completed == 0,
        event_counts,
        records,
    }
}

// ---------------------------------------------------------------------------
// Co-located engine
// ---------------------------------------------------------------------------

struct ActiveReq {
    idx: usize,
    remaining: u64,
    context: f64,
    last_token: f64,
}

/// Simulate one co-located instance serving `requests` for up to `horizon`
/// seconds of simulated time.
pub fn run_colocated(
    model: &ModelArch,
    hw: &HardwareSpec,
    point: &ColocatedPoint,
    requests: &[Request],
    horizon: f64,
) -> SimResult {
    let mapping = point.mapping;
    let slots = point.batch as usize;
    let gpus = u64::from(mapping.gpus());
    let mut metrics = Metrics::new();
    let mut counts = EventCounts::default();

    let mut records: Vec<RequestRecord> = requests
        .iter()
        .map(|r| RequestRecord {
            id: r.id,
            arrival_time: r.arrival_time,
            isl: r.isl,
            osl: r.osl,
            service_start: None,
            first_token_time: None,
            finish_time: None,
        })
        .collect();

    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by(|&a, &b| {
        requests[a]
            .arrival_time
            .total_cmp(&requests[b].arrival_time)
            .then(a.cmp(&b))
    });
    let mut pending: VecDeque<usize> = order.into();
    let mut active: Vec<ActiveReq> = Vec::new();
    // In-flight piggyback prefill: (request index, tokens already fed).
    let mut stream: Option<(usize, u64)> = None;

    let mut clock = 0.0f64;
    let mut busy = 0.0f64;

    while clock < horizon {
        // Advance to the next arrival when idle.
        if active.is_empty() && stream.is_none() {
            match pending.front() {
                None => break,
                Some(&idx) => {
                    if requests[idx].arrival_time > clock {
                        clock = requests[idx].arrival_time;
                    }
                }
            }
        }
        let arrived = |pending: &VecDeque<usize>, clock: f64| -> usize {
            pending
                .iter()
                .take_while(|&&i| requests[i].arrival_time <= clock)
                .count()
        };

        if point.piggybacked {
            if stream.is_none() && active.len() < slots && arrived(&pending, clock) > 0 {
                let idx = pending.pop_front().expect("non-empty");
                records[idx].service_start = Some(clock);
                stream = Some((idx, 0));
                counts.admissions += 1;
            }
        } else {
            // Whole-prompt prefills stall decode for one iteration.
            let free = slots.saturating_sub(active.len());
            let n_adm = free.min(arrived(&pending, clock));
            if n_adm > 0 {
                let batch: Vec<usize> = (0..n_adm)
                    .map(|_| pending.pop_front().expect("counted"))
                    .collect();
                let total_tokens: u64 = batch.iter().map(|&i| requests[i].isl).sum();
                let mix = BatchMix {
                    decode_tokens: 0.0,
                    decode_context: 0.0,
                    prefill_streams: n_adm as u64,
                    prefill_tokens: total_tokens,
                    prefill_prior: 0.0,
                    mla_reuse: true,
                };
                let start = clock;
                let dur = iteration_time(model, hw, &mapping, &mix).latency();
                clock += dur;
                busy += dur;
                counts.iterations += 1;
                counts.prefill_batches += 1;
                counts.admissions += n_adm as u64;
                for idx in batch {
                    records[idx].service_start = Some(start);
                    records[idx].first_token_time = Some(clock);
                    metrics.emit_token(clock);
                    metrics.ftl_sample(clock, clock - start);
                    active.push(ActiveReq {
                        idx,
                        remaining: requests[idx].osl - 1,
                        context: requests[idx].isl as f64 + 1.0,
                        last_token: clock,
                    });
                }
                continue;
            }
        }

        if active.is_empty() && stream.is_none() {
            continue;
        }

        // One mixed iteration.
        let chunk_feed = match (&stream, point.chunk_tokens) {
            (Some((idx, fed)), Some(chunk)) => chunk.min(requests[*idx].isl - fed),
            _ => 0,
        };
        let mean_ctx = if active.is_empty() {
            0.0
        } else {
            active.iter().map(|a| a.context).sum::<f64>() / active.len() as f64
        };
        let mix = BatchMix {
            decode_tokens: active.len() as f64,
            decode_context: mean_ctx,
            prefill_streams: u64::from(chunk_feed > 0),
            prefill_tokens: chunk_feed,
            prefill_prior: stream.map(|(_, fed)| fed as f64).unwrap_or(0.0),
            mla_reuse: point.mla_reuse,
        };
        let dur = iteration_time(model, hw, &mapping, &mix).latency();
        clock += dur;
        busy += dur;
        counts.iterations += 1;

        // Decode emissions.
        let mut finished: Vec<usize> = Vec::new();
        for a in active.iter_mut() {
            a.remaining -= 1;
            a.context += 1.0;
            metrics.emit_token(clock);
            metrics.ttl_interval(clock, clock - a.last_token);
            a.last_token = clock;
            if a.remaining == 0 {
                records[a.idx].finish_time = Some(clock);
                finished.push(a.idx);
            }
        }
        active.retain(|a| a.remaining > 0);

        // Piggyback feed progress.
        if let Some((idx, fed)) = stream {
            let fed = fed + chunk_feed;
            if fed >= requests[idx].isl {
                records[idx].first_token_time = Some(clock);
                metrics.emit_token(clock);
                metrics.ftl_sample(clock, clock - records[idx].service_start.expect("set"));
                active.push(ActiveReq {
                    idx,
                    remaining: requests[idx].osl - 1,
                    context: requests[idx].isl as f64 + 1.0,
                    last_token: clock,
                });
                stream = None;
            } else {
                stream = Some((idx, fed));
            }
        }
    }

    let measured_end = clock;
    let util = if measured_end > 0.0 {
        Some(busy.min(measured_end) / measured_end)
    } else {
        None
    };
    finalize(metrics, records, gpus, measured_end, counts, None, util)
}

// ---------------------------------------------------------------------------
// Disaggregated engine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum EventKind {
    /// External request arrival into the prefill queue.
    Arrival { req: usize },
    /// A prefill engine finished its batch and is free again.
    PrefillDone { instance: usize },
    /// The layer-pipelined KV transfer of a prefill batch landed.
    KvArrival { reqs: Vec<usize> },
    DecodeIterEnd { instance: usize },
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::Arrival { .. } => 0,
            EventKind::PrefillDone { .. } => 1,
            EventKind::KvArrival { .. } => 2,
            EventKind::DecodeIterEnd { .. } => 3,
        }
    }
}

struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap, we need earliest-first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.priority().cmp(&self.kind.priority()))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Simulate a rate-matched disaggregated deployment: `num_prefill_gpus /
/// prefill-instance-size` prefill engines feeding `num_decode_gpus /
/// decode-instance-size` decode engines through KV transfers at
/// `kv_bw_per_gpu` bytes/second per sharding GPU.
///
/// KV of a prefill batch is transferred layer by layer, overlapped with the
/// remaining prefill compute: with per-layer prefill time `p` and per-layer
/// transfer time `t`, the hand-off completes at
/// `start + p + (L-1)*max(p, t) + t` — no earlier than the prefill itself
/// and, when bandwidth meets the egress requirement, at most one layer's
/// payload after it.
pub fn run_disagg(
    model: &ModelArch,
    hw: &HardwareSpec,
    deployment: &DeploymentPoint,
    requests: &[Request],
    horizon: f64,
    kv_bw_per_gpu: f64,
) -> SimResult {
    assert!(kv_bw_per_gpu > 0.0, "kv bandwidth must be positive");
    let prefill_mapping = deployment.prefill.mapping;
    let decode_mapping = deployment.decode.mapping;
    let n_prefill = (deployment.num_prefill_gpus / u64::from(prefill_mapping.gpus())) as usize;
    let n_decode = (deployment.num_decode_gpus / u64::from(decode_mapping.gpus())) as usize;
    assert!(n_prefill >= 1 && n_decode >= 1, "whole instances required");
    let prefill_batch = deployment.prefill.batch as usize;
    let decode_slots = deployment.decode.batch as usize;
    let gpus = deployment.num_prefill_gpus + deployment.num_decode_gpus;
    let layers = model.num_layers as f64;
    let shard_width = kv_sharding_width(&prefill_mapping, model);

    let mut metrics = Metrics::new();
    let mut counts = EventCounts::default();
    let mut records: Vec<RequestRecord> = requests
        .iter()
        .map(|r| RequestRecord {
            id: r.id,
            arrival_time: r.arrival_time,
            isl: r.isl,
            osl: r.osl,
            service_start: None,
            first_token_time: None,
            finish_time: None,
        })
        .collect();

    let mut heap: BinaryHeap<Event> = BinaryHeap::new();
    let mut seq = 0u64;
    let push = |heap: &mut BinaryHeap<Event>, seq: &mut u64, time: f64, kind: EventKind| {
        *seq += 1;
        heap.push(Event {
            time,
            seq: *seq,
            kind,
        });
    };

    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by(|&a, &b| {
        requests[a]
            .arrival_time
            .total_cmp(&requests[b].arrival_time)
            .then(a.cmp(&b))
    });
    for idx in order {
        push(
            &mut heap,
            &mut seq,
            requests[idx].arrival_time,
            EventKind::Arrival { req: idx },
        );
    }

    let mut pending: VecDeque<usize> = VecDeque::new();
    let mut ready: VecDeque<usize> = VecDeque::new();
    let mut prefill_free: Vec<bool> = vec![true; n_prefill];
    let mut prefill_busy_time = 0.0f64;
    let mut decode_busy_time = 0.0f64;
    let mut decode_active: Vec<Vec<ActiveReq>> = (0..n_decode).map(|_| Vec::new()).collect();
    let mut decode_running: Vec<bool> = vec![false; n_decode];
    let mut clock = 0.0f64;

    // Prefill batch cost, cached per (batch size, mean isl) pair.
    let mut prefill_cache: Vec<((usize, u64), f64)> = Vec::new();
    let mut prefill_duration = |batch: &[usize]| -> f64 {
        let total: u64 = batch.iter().map(|&i| requests[i].isl).sum();
        let mean = total.div_ceil(batch.len() as u64);
        let key = (batch.len(), mean);
        if let Some((_, d)) = prefill_cache.iter().find(|(k, _)| *k == key) {
            return *d;
        }
        let d = crate::perfmodel::estimate_prefill(
            model,
            hw,
            &prefill_mapping,
            batch.len() as u64,
            mean,
        )
        .expect("valid mapping")
        .expect_feasible("prefill batch within the deployment's feasible batch");
        prefill_cache.push((key, d.latency));
        d.latency
    };

    macro_rules! start_prefills {
        () => {
            for pi in 0..n_prefill {
                if !prefill_free[pi] || pending.is_empty() {
                    continue;
                }
                let take = prefill_batch.min(pending.len());
                let batch: Vec<usize> = (0..take)
                    .map(|_| pending.pop_front().expect("counted"))
                    .collect();
                let dur = prefill_duration(&batch);
                let total_kv: f64 = batch
                    .iter()
                    .map(|&i| model.kv_bytes_per_request(requests[i].isl))
                    .sum();
                // Layer-pipelined transfer of the whole batch's KV.
                let per_layer_prefill = dur / layers;
                let per_layer_transfer = total_kv / layers / (kv_bw_per_gpu * shard_width);
                let kv_done = clock
                    + per_layer_prefill
                    + (layers - 1.0) * per_layer_prefill.max(per_layer_transfer)
                    + per_layer_transfer;
                for &idx in &batch {
                    records[idx].service_start = Some(clock);
                }
                prefill_free[pi] = false;
                prefill_busy_time += dur;
                counts.prefill_batches += 1;
                counts.kv_transfers += batch.len() as u64;
                push(
                    &mut heap,
                    &mut seq,
                    clock + dur,
                    EventKind::PrefillDone { instance: pi },
                );
                push(
                    &mut heap,
                    &mut seq,
                    kv_done,
                    EventKind::KvArrival { reqs: batch },
                );
            }
        };
    }

    macro_rules! start_decode {
        ($di:expr) => {{
            let di = $di;
            if !decode_running[di] && !decode_active[di].is_empty() {
                let mean_ctx = decode_active[di].iter().map(|a| a.context).sum::<f64>()
                    / decode_active[di].len() as f64;
                let mix = BatchMix::decode_only(decode_active[di].len() as f64, mean_ctx);
                let dur = iteration_time(model, hw, &decode_mapping, &mix).latency();
                decode_running[di] = true;
                decode_busy_time += dur;
                counts.iterations += 1;
                push(
                    &mut heap,
                    &mut seq,
                    clock + dur,
                    EventKind::DecodeIterEnd { instance: di },
                );
            }
        }};
    }

    macro_rules! admit_ready {
        () => {
            // Fill decode instances round-robin from the ready queue, then
            // kick any idle instance that now has work.
            'outer: for di in 0..n_decode {
                while decode_active[di].len() < decode_slots {
                    match ready.pop_front() {
                        Some(idx) => {
                            counts.admissions += 1;
                            decode_active[di].push(ActiveReq {
                                idx,
                                remaining: requests[idx].osl - 1,
                                context: requests[idx].isl as f64 + 1.0,
                                last_token: records[idx]
                                    .first_token_time
                                    .expect("kv landed before admission"),
                            });
                        }
                        None => break 'outer,
                    }
                }
            }
            for di in 0..n_decode {
                start_decode!(di);
            }
        };
    }

    while let Some(event) = heap.pop() {
        debug_assert!(event.time >= clock, "event time went backwards");
        if event.time > horizon {
            break;
        }
        clock = event.time;
        match event.kind {
            EventKind::Arrival { req } => {
                pending.push_back(req);
                // Coalesce simultaneous arrivals before dispatching batches,
                // otherwise a burst would be split into undersized batches.
                while let Some(next) = heap.peek() {
                    if next.time == clock && matches!(next.kind, EventKind::Arrival { .. }) {
                        let ev = heap.pop().expect("peeked");
                        if let EventKind::Arrival { req } = ev.kind {
                            pending.push_back(req);
                        }
                    } else {
                        break;
                    }
                }
                start_prefills!();
            }
            EventKind::PrefillDone { instance } => {
                prefill_free[instance] = true;
                start_prefills!();
            }
            EventKind::KvArrival { reqs } => {
                // First token is deliverable once the KV hand-off finishes.
                for idx in reqs {
                    let start = records[idx].service_start.expect("set at batch start");
                    records[idx].first_token_time = Some(clock);
                    metrics.emit_token(clock);
                    metrics.ftl_sample(clock, clock - start);
                    ready.push_back(idx);
                }
                admit_ready!();
            }
            EventKind::DecodeIterEnd { instance } => {
                let slot_list = &mut decode_active[instance];
                decode_running[instance] = false;
                for a in slot_list.iter_mut() {
                    a.remaining -= 1;
                    a.context += 1.0;
                    metrics.emit_token(clock);
                    metrics.ttl_interval(clock, clock - a.last_token);
                    a.last_token = clock;
                    if a.remaining == 0 {
                        records[a.idx].finish_time = Some(clock);
                    }
                }
                slot_list.retain(|a| a.remaining > 0);
                admit_ready!();
            }
        }
    }

    let measured_end = clock;
    let prefill_util = if measured_end > 0.0 {
        Some(prefill_busy_time.min(measured_end * n_prefill as f64) / (measured_end * n_prefill as f64))
    } else {
        None
    };
    let decode_util = if measured_end > 0.0 {
        Some(decode_busy_time.min(measured_end * n_decode as f64) / (measured_end * n_decode as f64))
    } else {
        None
    };
    finalize(
        metrics,
        records,
        gpus,
        measured_end,
        counts,
        prefill_util,
        decode_util,
    )
}

// ---------------------------------------------------------------------------
// Dynamic-vs-P50 comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DynVsP50Options {
    pub requests: usize,
    pub horizon: f64,
}

impl Default for DynVsP50Options {
    fn default() -> Self {
        DynVsP50Options {
            requests: 192,
            horizon: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DynVsP50Row {
    pub ttl_target: f64,
    /// Best simulated throughput meeting the target under the dynamic trace.
    pub dynamic_tps: Option<f64>,
    /// Same under the static power-of-two P50 proxy trace.
    pub p50_tps: Option<f64>,
    /// Relative gap |dynamic - p50| / p50.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DynVsP50Report {
    pub proxy_isl: u64,
    pub proxy_osl: u64,
    pub rows: Vec<DynVsP50Row>,
    pub median_gap: Option<f64>,
}

/// Simulate the deployments on the disaggregated frontier twice — once under
/// the dynamic trace, once under its static P50 power-of-two proxy — and
/// report the per-TTL-target relative throughput gap between the two
/// frontiers.
pub fn compare_dynamic_vs_p50(
    model: &ModelArch,
    hw: &HardwareSpec,
    space: &crate::enumerate::SearchSpace,
    sla: &crate::workload::SlaSpec,
    pattern: &TrafficPattern,
    seed: u64,
    max_total_gpus: u64,
    opts: DynVsP50Options,
) -> Result<DynVsP50Report, crate::pareto::PlanError> {
    let (proxy_isl, proxy_osl) = p50_pow2(pattern);
    let proxy = TrafficPattern::Static {
        isl: proxy_isl,
        osl: proxy_osl,
        saturation: pattern.saturation(),
    };
    let plan = crate::pareto::build_disagg_frontier(model, hw, space, sla, &proxy, max_total_gpus)?;
    let deployments: Vec<DeploymentPoint> = plan
        .frontier
        .points()
        .iter()
        .filter_map(|p| match &p.provenance {
            crate::pareto::Provenance::Disagg(d) => Some((**d).clone()),
            crate::pareto::Provenance::Colocated(_) => None,
        })
        .collect();

    let dynamic_trace = sample_traffic(pattern, opts.requests, seed);
    let proxy_trace = sample_traffic(&proxy, opts.requests, seed);

    let jobs: Vec<(DeploymentPoint, bool)> = deployments
        .iter()
        .flat_map(|d| [(d.clone(), true), (d.clone(), false)])
        .collect();
    let sims = map_collect(jobs, |(d, dynamic)| {
        let trace = if dynamic { &dynamic_trace } else { &proxy_trace };
        let result = run_disagg(model, hw, &d, trace, opts.horizon, hw.scaleout_bw_per_gpu);
        (dynamic, result)
    });
    let (dyn_runs, p50_runs): (Vec<_>, Vec<_>) = sims.into_iter().partition(|(d, _)| *d);

    let best_at = |runs: &[(bool, SimResult)], ttl: f64| -> Option<f64> {
        runs.iter()
            .filter(|(_, r)| !r.zero_completions && r.p50_ttl <= ttl)
            .map(|(_, r)| r.throughput_tokens_per_sec_per_gpu)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            })
    };

    let rows: Vec<DynVsP50Row> = sla
        .ttl_targets
        .iter()
        .map(|&ttl| {
            let dynamic_tps = best_at(&dyn_runs, ttl);
            let p50_tps = best_at(&p50_runs, ttl);
            let gap = match (dynamic_tps, p50_tps) {
                (Some(d), Some(p)) if p > 0.0 => Some((d - p).abs() / p),
                _ => None,
            };
            DynVsP50Row {
                ttl_target: ttl,
                dynamic_tps,
                p50_tps,
                gap,
            }
        })
        .collect();

    let mut gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
    let median_gap = if gaps.is_empty() {
        None
    } else {
        Some(percentile50(&mut gaps))
    };

    Ok(DynVsP50Report {
        proxy_isl,
        proxy_osl,
        rows,
        median_gap,
    })
}
