use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::classify::{classify, ClassLabel, ClassThresholds};
use super::labels::{Architecture, Condition};
use crate::comm::completion_time;
use crate::error::{Error, Result};
use crate::metrics::{
    dirichlet_alpha_of_counts, gini, max_mean, nearest_rank, summarize, window_gini,
    DirichletConfig, GiniMode, MetricSummary,
};
use crate::trace::{rank_loads_from, DispatchTrace, RankLoads, TopologySpec};

/// Where a cell's dispatch latency comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencySource {
    None,
    /// `rank_dispatch_ms` in the trace; every record must carry it.
    Measured,
    /// Completion-time model with the trace's bytes per token.
    Simulated(TopologySpec<f64>),
}

/// How per-dispatch system latencies reduce to one P99.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyPooling {
    /// Every (step, layer) dispatch is one sample.
    #[default]
    AllDispatches,
    /// P99 per layer, then the mean over layers.
    PerLayerMean,
}

/// Which loads feed the max/mean column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxMeanBasis {
    Expert,
    Rank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    pub gini_mode: GiniMode,
    pub dirichlet: DirichletConfig<f64>,
    pub latency: LatencySource,
    pub pooling: LatencyPooling,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            gini_mode: GiniMode::PerStep,
            dirichlet: DirichletConfig::default(),
            latency: LatencySource::None,
            pooling: LatencyPooling::AllDispatches,
        }
    }
}

/// One (architecture, condition) cell of the factorial matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub architecture: Architecture,
    pub condition: Condition,
    pub gini: MetricSummary<f64>,
    pub alpha: MetricSummary<f64>,
    pub max_mean: MetricSummary<f64>,
    pub max_mean_basis: MaxMeanBasis,
    pub p99_ms: Option<f64>,
}

impl CellResult {
    /// A cell known only by its Gini value (and optionally P99).
    pub fn from_gini(
        architecture: Architecture,
        condition: Condition,
        gini_value: f64,
        p99_ms: Option<f64>,
    ) -> Result<Self> {
        let one = summarize(&[gini_value])?;
        let nan = MetricSummary {
            count: 0,
            mean: f64::NAN,
            stdev: f64::NAN,
            p50: f64::NAN,
            p99: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
        };
        Ok(Self {
            architecture,
            condition,
            gini: one,
            alpha: nan,
            max_mean: nan,
            max_mean_basis: MaxMeanBasis::Rank,
            p99_ms,
        })
    }
}

fn p99_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    nearest_rank(&v, 99)
}

/// Summarizes one labeled trace. Labels come from the metadata `model` and
/// `condition` fields.
pub fn cell_from_trace(trace: &DispatchTrace, opts: &CellOptions) -> Result<CellResult> {
    let architecture: Architecture = trace.metadata.model.parse()?;
    let condition: Condition = trace.metadata.condition.parse()?;
    if trace.records.is_empty() {
        return Err(Error::Empty("trace has no records"));
    }
    let ranks: Vec<RankLoads> = trace
        .records
        .iter()
        .map(|r| rank_loads_from(&r.send_counts))
        .collect();

    let gini_summary = match opts.gini_mode {
        GiniMode::PerStep => {
            let v = ranks
                .iter()
                .map(|c| gini(&c.as_scalars::<f64>()))
                .collect::<Result<Vec<_>>>()?;
            summarize(&v)?
        }
        GiniMode::Pooled => summarize(&[window_gini::<f64>(&ranks, GiniMode::Pooled)?])?,
    };
    let alphas = ranks
        .iter()
        .map(|c| dirichlet_alpha_of_counts(c.as_slice(), &opts.dirichlet))
        .collect::<Result<Vec<_>>>()?;

    let experts_known = trace.records.iter().all(|r| r.expert_loads.is_some());
    let (basis, mm) = if experts_known {
        let v = trace
            .records
            .iter()
            .map(|r| max_mean(&r.expert_loads.as_ref().unwrap().as_scalars::<f64>()))
            .collect::<Result<Vec<_>>>()?;
        (MaxMeanBasis::Expert, v)
    } else {
        let v = ranks
            .iter()
            .map(|c| max_mean(&c.as_scalars::<f64>()))
            .collect::<Result<Vec<_>>>()?;
        (MaxMeanBasis::Rank, v)
    };

    let latencies: Option<Vec<(u32, f64)>> = match &opts.latency {
        LatencySource::None => None,
        LatencySource::Measured => Some(
            trace
                .records
                .iter()
                .map(|r| {
                    r.system_dispatch_ms()
                        .map(|ms| (r.layer, ms))
                        .ok_or_else(|| Error::InvalidRecord {
                            step: r.step,
                            layer: r.layer,
                            reason: "no rank_dispatch_ms for measured latency".into(),
                        })
                })
                .collect::<Result<_>>()?,
        ),
        LatencySource::Simulated(topo) => {
            let bpt = trace.metadata.bytes_per_token() as f64;
            Some(
                trace
                    .records
                    .iter()
                    .map(|r| {
                        completion_time(&r.send_counts, topo, bpt)
                            .map(|c| (r.layer, c.system_time * 1e3))
                    })
                    .collect::<Result<_>>()?,
            )
        }
    };
    let p99_ms = latencies.map(|lat| match opts.pooling {
        LatencyPooling::AllDispatches => p99_of(lat.into_iter().map(|(_, v)| v).collect()),
        LatencyPooling::PerLayerMean => {
            let mut by_layer: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            for (l, v) in lat {
                by_layer.entry(l).or_default().push(v);
            }
            let n = by_layer.len() as f64;
            by_layer.into_values().map(p99_of).sum::<f64>() / n
        }
    });

    Ok(CellResult {
        architecture,
        condition,
        gini: gini_summary,
        alpha: summarize(&alphas)?,
        max_mean: summarize(&mm)?,
        max_mean_basis: basis,
        p99_ms,
    })
}

/// Mock-to-real improvement for one architecture.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementRatio {
    pub architecture: Architecture,
    pub mock_gini: Option<f64>,
    pub best_real_gini: Option<f64>,
    pub best_real_condition: Option<Condition>,
    /// `mock / best real`; absent when either side is missing or real is 0.
    pub ratio: Option<f64>,
    /// Lowest-Gini cell of the row over every condition.
    pub best_condition: Condition,
    pub class: Option<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorialMatrix {
    /// Sorted by (architecture, condition).
    pub cells: Vec<CellResult>,
    pub ratios: Vec<ImprovementRatio>,
}

impl FactorialMatrix {
    pub fn from_cells(mut cells: Vec<CellResult>, th: &ClassThresholds) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &cells {
            if !seen.insert((c.architecture, c.condition)) {
                return Err(Error::DuplicateCell {
                    architecture: c.architecture.to_string(),
                    condition: c.condition.to_string(),
                });
            }
        }
        cells.sort_by_key(|c| (c.architecture, c.condition));

        let mut ratios = Vec::new();
        for arch in Architecture::ALL {
            let row: Vec<&CellResult> = cells.iter().filter(|c| c.architecture == arch).collect();
            let Some(best) = row
                .iter()
                .min_by(|a, b| a.gini.mean.total_cmp(&b.gini.mean))
            else {
                continue;
            };
            let mock = row
                .iter()
                .find(|c| c.condition == Condition::Mock)
                .map(|c| c.gini.mean);
            let best_real = row
                .iter()
                .filter(|c| c.condition.is_real())
                .min_by(|a, b| a.gini.mean.total_cmp(&b.gini.mean));
            let real = best_real.map(|c| c.gini.mean);
            let ratio = match (mock, real) {
                (Some(m), Some(r)) if r > 0.0 => Some(m / r),
                _ => None,
            };
            let class = match (mock, real) {
                (Some(m), Some(r)) => Some(classify(m, r, th)?),
                _ => None,
            };
            ratios.push(ImprovementRatio {
                architecture: arch,
                mock_gini: mock,
                best_real_gini: real,
                best_real_condition: best_real.map(|c| c.condition),
                ratio,
                best_condition: best.condition,
                class,
            });
        }
        Ok(Self { cells, ratios })
    }

    pub fn cell(&self, a: Architecture, c: Condition) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|x| x.architecture == a && x.condition == c)
    }

    pub fn ratio(&self, a: Architecture) -> Option<&ImprovementRatio> {
        self.ratios.iter().find(|r| r.architecture == a)
    }
}

/// Summarizes every labeled trace (in parallel) and assembles the matrix.
pub fn factorial_aggregate(
    traces: &[DispatchTrace],
    opts: &CellOptions,
    th: &ClassThresholds,
) -> Result<FactorialMatrix> {
    let cells = traces
        .par_iter()
        .map(|t| cell_from_trace(t, opts))
        .collect::<Result<Vec<_>>>()?;
    FactorialMatrix::from_cells(cells, th)
}
