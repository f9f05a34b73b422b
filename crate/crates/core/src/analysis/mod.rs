//! Experiment pipelines over traces and generators.

mod classify;
mod correlation;
mod depth;
mod ep_scan;
mod factorial;
mod labels;
mod sweep;
mod temporal;

pub use classify::{classify, ClassLabel, ClassThresholds};
pub use correlation::{
    gini_latency_correlation, linear_fit, pearson, permutation_null, CorrelationResult, GroupFit,
    NullDistribution,
};
pub use depth::{depth_profile, DepthPoint};
pub use ep_scan::{ep_scan, AssignmentMode, EpPoint, EpScanResult, Window};
pub use factorial::{
    cell_from_trace, factorial_aggregate, CellOptions, CellResult, FactorialMatrix,
    ImprovementRatio, LatencyPooling, LatencySource, MaxMeanBasis,
};
pub use labels::{Architecture, Condition};
pub use sweep::{token_sweep, SweepPoint};
pub use temporal::lag_correlation;
