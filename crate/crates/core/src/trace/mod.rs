//! Dispatch-trace domain types and the line-delimited trace format.
//!
//! A trace file is UTF-8 JSON lines: the first line is a [`TraceMetadata`]
//! object, every following line one [`StepRecord`]. Files ending in `.gz` are
//! gzip-compressed transparently. The format is documented byte-for-byte in
//! `docs/trace-format.md` at the repository root.

mod io;
mod types;

pub use io::{read_trace, write_trace, FileTraceWriter, TraceReader, TraceWriter};
pub use types::{
    rank_loads_from, DispatchTrace, ExpertLoads, Placement, RankLoads, SendCounts, StepRecord,
    TopologySpec, TraceMetadata,
};
