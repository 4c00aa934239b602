//! Capacity-planning toolkit for co-located and disaggregated LLM inference
//! serving.
//!
//! The crate is organized around a small pipeline:
//!
//! * [`workload`] — model / hardware / traffic / SLA schemas and config
//!   ingestion.
//! * [`perfmodel`] — analytical roofline estimator for prefill, decode, and
//!   mixed (co-located) iterations.
//! * [`enumerate`] — design-space generation and feasibility filtering over
//!   parallelism mappings and batch sizes.
//! * [`ratematch`] — prefill selection and prefill:decode GPU rate matching.
//! * [`pareto`] — throughput–interactivity frontier construction, areas, and
//!   mode comparisons.
//! * [`kvbw`] — KV-cache transfer bandwidth requirements (egress/ingress).
//! * [`simulate`] — discrete-event, request-level simulator used as a
//!   validation oracle for the analytical estimates.
//!
//! All planner entry points are pure functions of their inputs; candidate
//! evaluation is data-parallel when the `parallel` feature (default) is
//! enabled and falls back to plain iterators otherwise.

pub mod enumerate;
pub mod kvbw;
pub mod par;
pub mod pareto;
pub mod perfmodel;
pub mod ratematch;
pub mod simulate;
pub mod workload;

pub use workload::{
    load_config, AttentionKind, ConfigDoc, ConfigError, FfnKind, HardwareSpec, ModelArch,
    ParallelismMapping, SlaSpec, TrafficPattern,
};
