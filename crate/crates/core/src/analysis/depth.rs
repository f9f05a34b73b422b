use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{gini, summarize, MetricSummary};
use crate::trace::{rank_loads_from, DispatchTrace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthPoint {
    pub layer: u32,
    /// Position among the trace's layers divided by the layer count.
    pub depth_fraction: f64,
    /// Per-step rank Gini at this layer.
    pub gini: MetricSummary<f64>,
}

/// Mean per-step rank Gini for each layer, ordered by layer index.
pub fn depth_profile(trace: &DispatchTrace) -> Result<Vec<DepthPoint>> {
    let mut by_layer: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in &trace.records {
        let c = rank_loads_from(&r.send_counts);
        by_layer
            .entry(r.layer)
            .or_default()
            .push(gini(&c.as_scalars::<f64>())?);
    }
    if by_layer.is_empty() {
        return Err(Error::Empty("trace has no records"));
    }
    let n = by_layer.len() as f64;
    by_layer
        .into_iter()
        .enumerate()
        .map(|(i, (layer, g))| {
            Ok(DepthPoint {
                layer,
                depth_fraction: i as f64 / n,
                gini: summarize(&g)?,
            })
        })
        .collect()
}
