use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The `P×P` dispatch matrix: `get(i, j)` is the number of tokens rank `i`
/// sends to rank `j` in one dispatch.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SendCounts {
    p: usize,
    data: Vec<u64>,
}

impl SendCounts {
    /// Builds from row-major data of length `p * p`.
    pub fn from_row_major(p: usize, data: Vec<u64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::param("p", "rank count must be positive"));
        }
        if data.len() != p * p {
            return Err(Error::Dimension {
                what: "send_counts entries",
                expected: p * p,
                actual: data.len(),
            });
        }
        Ok(Self { p, data })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let p = rows.len();
        let mut data = Vec::with_capacity(p * p);
        for row in rows {
            if row.len() != p {
                return Err(Error::Dimension {
                    what: "send_counts row length",
                    expected: p,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(p, data)
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            p,
            data: vec![0; p * p],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, src: usize, dst: usize) -> u64 {
        self.data[src * self.p + dst]
    }

    #[inline]
    pub(crate) fn add(&mut self, src: usize, dst: usize, n: u64) {
        self.data[src * self.p + dst] += n;
    }

    pub fn as_row_major(&self) -> &[u64] {
        &self.data
    }

    pub fn row(&self, src: usize) -> &[u64] {
        &self.data[src * self.p..(src + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.data.chunks_exact(self.p)
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.data.iter().sum()
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            p: self.p,
            data: self.data.iter().map(|&v| v * factor).collect(),
        }
    }
}

/// Per-rank receive counts (column sums of a [`SendCounts`]).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankLoads(pub Vec<u64>);

impl RankLoads {
    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_scalars<F: Scalar>(&self) -> Vec<F> {
        crate::scalar::counts_as(&self.0)
    }
}

/// Per-expert token counts for one dispatch. Independent of expert placement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExpertLoads(pub Vec<u64>);

impl ExpertLoads {
    pub fn new(loads: Vec<u64>) -> Result<Self> {
        if loads.is_empty() {
            return Err(Error::Empty("expert loads need at least one expert"));
        }
        Ok(Self(loads))
    }

    pub fn experts(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_scalars<F: Scalar>(&self) -> Vec<F> {
        crate::scalar::counts_as(&self.0)
    }
}

/// Column sums of `s`: `c_j = Σ_i S[i][j]`.
pub fn rank_loads_from(s: &SendCounts) -> RankLoads {
    let mut c = vec![0u64; s.p];
    for row in s.rows() {
        for (acc, &v) in c.iter_mut().zip(row) {
            *acc += v;
        }
    }
    RankLoads(c)
}

/// Balanced assignment of `E` experts onto `P` ranks, `E/P` experts per rank.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Placement {
    ranks: usize,
    expert_to_rank: Vec<usize>,
}

impl Placement {
    pub fn new(ranks: usize, expert_to_rank: Vec<usize>) -> Result<Self> {
        let experts = expert_to_rank.len();
        if ranks == 0 || experts == 0 || experts % ranks != 0 {
            return Err(Error::Divisibility { experts, ranks });
        }
        let per_rank = experts / ranks;
        let mut seen = vec![0usize; ranks];
        for &r in &expert_to_rank {
            if r >= ranks {
                return Err(Error::param(
                    "placement",
                    format!("rank index {r} out of range for {ranks} ranks"),
                ));
            }
            seen[r] += 1;
        }
        if let Some(r) = seen.iter().position(|&n| n != per_rank) {
            return Err(Error::param(
                "placement",
                format!("rank {r} holds {} experts, expected {per_rank}", seen[r]),
            ));
        }
        Ok(Self {
            ranks,
            expert_to_rank,
        })
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    pub fn experts(&self) -> usize {
        self.expert_to_rank.len()
    }

    pub fn experts_per_rank(&self) -> usize {
        self.expert_to_rank.len() / self.ranks
    }

    #[inline]
    pub fn rank_of(&self, expert: usize) -> usize {
        self.expert_to_rank[expert]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.expert_to_rank
    }
}

/// Rank count plus the two-tier bandwidth hierarchy. Rank `r` lives on node
/// `r / gpus_per_node`. Bandwidths are bytes per second per GPU; latency in
/// seconds per collective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec<F = f64> {
    pub p: usize,
    pub gpus_per_node: usize,
    pub bw_intra: F,
    pub bw_inter: F,
    pub fixed_latency: F,
}

impl<F: Scalar> TopologySpec<F> {
    pub const DEFAULT_GPUS_PER_NODE: usize = 4;

    /// NVLink 450 GB/s aggregate, InfiniBand HDR 25 GB/s, 20 µs latency, four
    /// GPUs per node.
    pub fn with_defaults(p: usize) -> Self {
        Self {
            p,
            gpus_per_node: Self::DEFAULT_GPUS_PER_NODE,
            bw_intra: F::lit(450e9),
            bw_inter: F::lit(25e9),
            fixed_latency: F::lit(20e-6),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::param("p", "rank count must be positive"));
        }
        if self.gpus_per_node == 0 {
            return Err(Error::param("gpus_per_node", "must be positive"));
        }
        if !(self.bw_intra > F::zero()) || !self.bw_intra.is_finite() {
            return Err(Error::param("bw_intra", "bandwidth must be positive"));
        }
        if !(self.bw_inter > F::zero()) || !self.bw_inter.is_finite() {
            return Err(Error::param("bw_inter", "bandwidth must be positive"));
        }
        if !(self.fixed_latency >= F::zero()) {
            return Err(Error::param("fixed_latency", "must be non-negative"));
        }
        Ok(())
    }

    #[inline]
    pub fn node_of(&self, rank: usize) -> usize {
        rank / self.gpus_per_node
    }

    #[inline]
    pub fn same_node(&self, a: usize, b: usize) -> bool {
        self.node_of(a) == self.node_of(b)
    }
}

/// One dispatch: a (step, layer) pair with its send-counts matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub layer: u32,
    pub send_counts: SendCounts,
    pub expert_loads: Option<ExpertLoads>,
    /// Per-rank dispatch latency in milliseconds. Absent is not zero.
    pub rank_dispatch_ms: Option<Vec<f64>>,
}

impl StepRecord {
    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidRecord {
            step: self.step,
            layer: self.layer,
            reason: reason.into(),
        }
    }

    /// Checks the record against the trace metadata.
    pub fn validate(&self, meta: &TraceMetadata) -> Result<()> {
        let p = self.send_counts.p();
        if p != meta.ep {
            return Err(self.invalid(format!(
                "send_counts is {p}x{p} but metadata declares ep={}",
                meta.ep
            )));
        }
        if let Some(e) = &self.expert_loads {
            if e.experts() != meta.experts {
                return Err(self.invalid(format!(
                    "expert_loads has {} entries, metadata declares experts={}",
                    e.experts(),
                    meta.experts
                )));
            }
            if e.total() != self.send_counts.total() {
                return Err(self.invalid(format!(
                    "expert_loads total {} differs from send_counts total {}",
                    e.total(),
                    self.send_counts.total()
                )));
            }
        }
        if let Some(ms) = &self.rank_dispatch_ms {
            if ms.len() != p {
                return Err(self.invalid(format!(
                    "rank_dispatch_ms has {} entries, expected {p}",
                    ms.len()
                )));
            }
            if let Some(r) = ms.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(self.invalid(format!(
                    "rank_dispatch_ms[{r}] = {} is not a finite non-negative latency",
                    ms[r]
                )));
            }
        }
        if let Some(t) = meta.local_tokens {
            let want = t * meta.topk as u64;
            for (i, sum) in self.send_counts.row_sums().into_iter().enumerate() {
                if sum != want {
                    return Err(self.invalid(format!(
                        "row {i} sums to {sum}, expected local_tokens*topk = {want}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// System dispatch latency: the slowest rank.
    pub fn system_dispatch_ms(&self) -> Option<f64> {
        self.rank_dispatch_ms
            .as_ref()
            .map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Header line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMetadata {
    pub model: String,
    pub condition: String,
    pub ep: usize,
    pub tp: usize,
    pub experts: usize,
    pub topk: usize,
    pub gbs: u64,
    pub seqlen: u64,
    pub hidden: u64,
    pub bytes_per_elem: u64,
    /// Tokens each rank routes per dispatch. When present with no drops, every
    /// send-counts row must sum to `local_tokens * topk`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_tokens: Option<u64>,
    /// Free-form description of how the trace was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl TraceMetadata {
    pub fn validate(&self) -> Result<()> {
        if self.ep == 0 {
            return Err(Error::InvalidTrace("ep must be positive".into()));
        }
        if self.experts == 0 {
            return Err(Error::InvalidTrace("experts must be positive".into()));
        }
        if self.topk == 0 || self.topk > self.experts {
            return Err(Error::InvalidTrace(format!(
                "topk={} must be in 1..={}",
                self.topk, self.experts
            )));
        }
        if self.tp == 0 {
            return Err(Error::InvalidTrace("tp must be positive".into()));
        }
        Ok(())
    }

    /// Bytes moved per dispatched token: `hidden * bytes_per_elem`.
    pub fn bytes_per_token(&self) -> u64 {
        self.hidden * self.bytes_per_elem
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchTrace {
    pub metadata: TraceMetadata,
    pub records: Vec<StepRecord>,
}

impl DispatchTrace {
    pub fn new(metadata: TraceMetadata, records: Vec<StepRecord>) -> Result<Self> {
        let t = Self { metadata, records };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        self.metadata.validate()?;
        let mut seen = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            r.validate(&self.metadata)?;
            if !seen.insert((r.step, r.layer)) {
                return Err(r.invalid("duplicate (step, layer) pair"));
            }
        }
        Ok(())
    }

    /// Sorted distinct layer indices.
    pub fn layers(&self) -> Vec<u32> {
        let mut l: Vec<u32> = self.records.iter().map(|r| r.layer).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    /// Records of one layer in step order.
    pub fn layer_records(&self, layer: u32) -> Vec<&StepRecord> {
        let mut v: Vec<&StepRecord> = self.records.iter().filter(|r| r.layer == layer).collect();
        v.sort_by_key(|r| r.step);
        v
    }
}
