use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{expert_to_rank_loads, gini, summarize, MetricSummary};
use crate::seed;
use crate::workload::{
    make_placement, route_expert_loads, sample_popularity, DriftSchedule, PlacementScheme,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub tokens: usize,
    /// Per-rank Gini across runs.
    pub gini: MetricSummary<f64>,
}

/// Per-rank Gini as a function of tokens per step.
///
/// Each run draws one popularity seed and keeps it across every token count,
/// so the sweep isolates sampling noise from router draws. With a drift
/// schedule, point `i` of `n` uses the concentration at step
/// `i * steps / (n - 1)`, the way growing batch size walks a drifting router.
#[allow(clippy::too_many_arguments)]
pub fn token_sweep(
    experts: usize,
    top_k: usize,
    alpha: f64,
    drift: Option<DriftSchedule>,
    token_counts: &[usize],
    runs: usize,
    ranks: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if token_counts.is_empty() {
        return Err(Error::Empty("token counts"));
    }
    if runs == 0 {
        return Err(Error::param("runs", "must be positive"));
    }
    let placement = make_placement(experts, ranks, PlacementScheme::Block)?;
    let n = token_counts.len();
    let alpha_of = |i: usize| match drift {
        None => alpha,
        Some(d) if n > 1 => d.alpha_at(i as u64 * d.steps / (n as u64 - 1)),
        Some(d) => d.alpha_start,
    };
    let jobs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..runs).map(move |r| (i, r)))
        .collect();
    let values = jobs
        .par_iter()
        .map(|&(i, r)| {
            let pop = sample_popularity(
                experts,
                alpha_of(i),
                seed::derive(seed, "sweep-popularity", &[r as u64]),
            )?;
            let loads = route_expert_loads(
                token_counts[i],
                &pop,
                top_k,
                seed::derive(seed, "sweep-route", &[r as u64, i as u64]),
                0,
            )?;
            gini(&expert_to_rank_loads(&loads, &placement)?.as_scalars::<f64>())
        })
        .collect::<Result<Vec<_>>>()?;
    values
        .chunks(runs)
        .zip(token_counts)
        .map(|(g, &tokens)| {
            Ok(SweepPoint {
                tokens,
                gini: summarize(g)?,
            })
        })
        .collect()
}
