//! Routing-imbalance analysis for mixture-of-experts expert parallelism.
//!
//! The crate ingests per-layer AlltoAll dispatch traces (the `P×P` send-counts
//! matrix of every MoE dispatch), computes the imbalance statistics used to
//! characterize them (per-rank Gini, per-expert max/mean, moment-matched
//! Dirichlet concentration), models AlltoAll completion time over a two-tier
//! NVLink/InfiniBand hierarchy, and generates synthetic routing workloads.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common `f64` instantiations. Exact rational Gini is available as
//! [`metrics::gini_exact`].

pub mod analysis;
pub mod comm;
mod error;
pub mod metrics;
pub mod scalar;
pub mod seed;
pub mod trace;
pub mod workload;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use trace::{
    DispatchTrace, ExpertLoads, Placement, RankLoads, SendCounts, StepRecord, TopologySpec,
    TraceMetadata,
};

/// Window summary over `f64` per-step values.
pub type MetricSummary64 = metrics::MetricSummary<f64>;
/// Window summary over `f32` per-step values.
pub type MetricSummary32 = metrics::MetricSummary<f32>;
/// Completion report in `f64` seconds.
pub type CompletionReport64 = comm::CompletionReport<f64>;
/// Dirichlet estimator settings for `f64`.
pub type DirichletConfig64 = metrics::DirichletConfig<f64>;
