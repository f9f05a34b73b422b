use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{expert_to_rank_loads, gini, max_mean, summarize, MetricSummary};
use crate::seed;
use crate::trace::ExpertLoads;
use crate::workload::{make_placement, route_expert_loads, PlacementScheme, RouterModel};

/// Whether every P sees the same routed tokens or its own draw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    /// One set of assignments per step, reused at every P.
    Fixed,
    /// Fresh tokens per P under the same seed policy.
    #[default]
    Resampled,
}

/// Matched measurement window: `warmup` steps are generated and discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub warmup: u64,
    pub measure: u64,
}

impl Window {
    pub fn new(warmup: u64, measure: u64) -> Result<Self> {
        if measure == 0 {
            return Err(Error::param("window", "measurement window is empty"));
        }
        Ok(Self { warmup, measure })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpPoint {
    pub ep: usize,
    /// Per-expert max/mean over the measured steps.
    pub max_mean: MetricSummary<f64>,
    /// Per-rank Gini over the measured steps.
    pub rank_gini: MetricSummary<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpScanResult {
    pub mode: AssignmentMode,
    pub tokens_per_step: usize,
    pub window: Window,
    pub points: Vec<EpPoint>,
    /// `(max - min) / min * 100` over the per-P mean max/mean.
    pub flatness_pct: f64,
}

fn loads_at(
    router: &RouterModel,
    tokens: usize,
    step: u64,
    route_seed: u64,
    pop_seed: u64,
) -> Result<ExpertLoads> {
    let pop = router.popularity_at(step, pop_seed)?;
    route_expert_loads(tokens, &pop, router.top_k, route_seed, step)
}

/// Sweeps expert-parallel degree with an identical token budget per step at
/// every P. Popularity (including any drift) is shared across P.
pub fn ep_scan(
    router: &RouterModel,
    p_list: &[usize],
    scheme: PlacementScheme,
    window: Window,
    tokens_per_step: usize,
    mode: AssignmentMode,
    seed: u64,
) -> Result<EpScanResult> {
    router.validate()?;
    if window.measure == 0 {
        return Err(Error::param("window", "measurement window is empty"));
    }
    if p_list.is_empty() {
        return Err(Error::Empty("ep list"));
    }
    if tokens_per_step == 0 {
        return Err(Error::param("tokens_per_step", "must be at least 1"));
    }
    let placements = p_list
        .iter()
        .map(|&p| make_placement(router.experts, p, scheme))
        .collect::<Result<Vec<_>>>()?;

    let pop_seed = seed::derive(seed, "scan-popularity", &[]);
    let steps: Vec<u64> = (0..window.warmup + window.measure).collect();
    // Warmup steps are routed and dropped so that drift sits where it would
    // after a real warmup.
    let per_step: Vec<Vec<(f64, f64)>> = steps
        .par_iter()
        .map(|&step| {
            let shared = match mode {
                AssignmentMode::Fixed => Some(loads_at(
                    router,
                    tokens_per_step,
                    step,
                    seed::derive(seed, "scan-route", &[]),
                    pop_seed,
                )?),
                AssignmentMode::Resampled => None,
            };
            placements
                .iter()
                .map(|pl| {
                    let loads = match &shared {
                        Some(l) => l.clone(),
                        None => loads_at(
                            router,
                            tokens_per_step,
                            step,
                            seed::derive(seed, "scan-route", &[pl.ranks() as u64]),
                            pop_seed,
                        )?,
                    };
                    let mm = max_mean(&loads.as_scalars::<f64>())?;
                    let ranks = expert_to_rank_loads(&loads, pl)?;
                    Ok((mm, gini(&ranks.as_scalars::<f64>())?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let measured = &per_step[window.warmup as usize..];
    let mut points = Vec::with_capacity(p_list.len());
    for (i, &p) in p_list.iter().enumerate() {
        let mm: Vec<f64> = measured.iter().map(|s| s[i].0).collect();
        let g: Vec<f64> = measured.iter().map(|s| s[i].1).collect();
        points.push(EpPoint {
            ep: p,
            max_mean: summarize(&mm)?,
            rank_gini: summarize(&g)?,
        });
    }
    let means = points.iter().map(|p| p.max_mean.mean);
    let hi = means.clone().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.fold(f64::INFINITY, f64::min);
    Ok(EpScanResult {
        mode,
        tokens_per_step,
        window,
        points,
        flatness_pct: (hi - lo) / lo * 100.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn router() -> RouterModel {
        RouterModel::from_alpha(32, 4, 0.5, None, 11).unwrap()
    }

    #[test]
    fn fixed_mode_is_exactly_flat() {
        let r = ep_scan(
            &router(),
            &[4, 8, 16, 32],
            PlacementScheme::RoundRobin,
            Window::new(2, 5).unwrap(),
            4000,
            AssignmentMode::Fixed,
            3,
        )
        .unwrap();
        assert_eq!(r.flatness_pct, 0.0);
        let first = r.points[0].max_mean;
        assert!(r.points.iter().all(|p| p.max_mean == first));
    }

    #[test]
    fn single_step_window_degenerates() {
        let r = ep_scan(
            &router(),
            &[4],
            PlacementScheme::Block,
            Window::new(0, 1).unwrap(),
            1000,
            AssignmentMode::Resampled,
            3,
        )
        .unwrap();
        let s = r.points[0].max_mean;
        assert_eq!(s.count, 1);
        assert_eq!(s.min, s.max);
        assert_eq!(s.mean, s.p99);
        assert_eq!(s.stdev, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Window::new(5, 0).is_err());
        let w = Window {
            warmup: 0,
            measure: 0,
        };
        let e = ep_scan(
            &router(),
            &[4],
            PlacementScheme::Block,
            w,
            10,
            AssignmentMode::Fixed,
            1,
        );
        assert!(e.is_err());
        let w = Window::new(0, 1).unwrap();
        let e = ep_scan(
            &router(),
            &[5],
            PlacementScheme::Block,
            w,
            10,
            AssignmentMode::Fixed,
            1,
        );
        assert!(matches!(e, Err(Error::Divisibility { .. })));
    }
}
