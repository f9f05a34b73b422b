use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::placement::{make_placement, PlacementScheme};
use super::routing::{route_step, DriftSchedule, RouterModel};
use crate::comm::completion_time;
use crate::error::{Error, Result};
use crate::seed;
use crate::trace::{FileTraceWriter, StepRecord, TopologySpec, TraceMetadata};

/// Records generated (and held in memory) per parallel batch.
const BATCH_STEPS: u64 = 16;

/// Destination for generated records.
pub trait TraceSink {
    fn write_record(&mut self, rec: &StepRecord) -> Result<()>;
}

impl TraceSink for FileTraceWriter {
    fn write_record(&mut self, rec: &StepRecord) -> Result<()> {
        FileTraceWriter::write_record(self, rec)
    }
}

impl TraceSink for Vec<StepRecord> {
    fn write_record(&mut self, rec: &StepRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// Multi-step, multi-layer synthetic trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub model: String,
    pub condition: String,
    pub experts: usize,
    pub top_k: usize,
    pub ep: usize,
    pub tp: usize,
    /// Global tokens routed per dispatch, spread round-robin over ranks.
    pub tokens_per_step: usize,
    pub steps: u64,
    pub layers: u32,
    pub placement: PlacementScheme,
    /// Concentration of every layer's popularity unless `layer_alphas` is set.
    pub alpha: f64,
    /// Per-layer concentrations; length must equal `layers`.
    pub layer_alphas: Option<Vec<f64>>,
    /// Per-step resampling. Each layer's schedule is scaled so that it starts
    /// at that layer's own concentration.
    pub drift: Option<DriftSchedule>,
    pub gbs: u64,
    pub seqlen: u64,
    pub hidden: u64,
    pub bytes_per_elem: u64,
    /// Fill `rank_dispatch_ms` from the completion-time model.
    pub timing: Option<TopologySpec<f64>>,
    pub expert_loads: bool,
    pub seed: u64,
}

impl GeneratorConfig {
    /// MLA-like sizing at reference scale with a single layer.
    pub fn new(experts: usize, top_k: usize, ep: usize, alpha: f64, seed: u64) -> Self {
        Self {
            model: "synthetic".into(),
            condition: "mock".into(),
            experts,
            top_k,
            ep,
            tp: 1,
            tokens_per_step: 4096 * ep,
            steps: 1,
            layers: 1,
            placement: PlacementScheme::Block,
            alpha,
            layer_alphas: None,
            drift: None,
            gbs: 32,
            seqlen: 4096,
            hidden: 2048,
            bytes_per_elem: 2,
            timing: None,
            expert_loads: true,
            seed,
        }
    }

    pub fn metadata(&self) -> TraceMetadata {
        let divisible = self.tokens_per_step % self.ep == 0;
        TraceMetadata {
            model: self.model.clone(),
            condition: self.condition.clone(),
            ep: self.ep,
            tp: self.tp,
            experts: self.experts,
            topk: self.top_k,
            gbs: self.gbs,
            seqlen: self.seqlen,
            hidden: self.hidden,
            bytes_per_elem: self.bytes_per_elem,
            local_tokens: divisible.then_some((self.tokens_per_step / self.ep) as u64),
            provenance: Some(serde_json::json!({
                "generator": serde_json::to_value(self).expect("config serializes"),
            })),
        }
    }

    fn layer_alpha(&self, layer: u32) -> f64 {
        match &self.layer_alphas {
            Some(v) => v[layer as usize],
            None => self.alpha,
        }
    }

    fn routers(&self) -> Result<Vec<RouterModel>> {
        if let Some(v) = &self.layer_alphas {
            if v.len() != self.layers as usize {
                return Err(Error::Dimension {
                    what: "layer_alphas",
                    expected: self.layers as usize,
                    actual: v.len(),
                });
            }
        }
        (0..self.layers)
            .map(|l| {
                let a = self.layer_alpha(l);
                let drift = self.drift.map(|d| DriftSchedule {
                    alpha_start: a,
                    alpha_end: a * d.alpha_end / d.alpha_start,
                    steps: d.steps,
                });
                RouterModel::from_alpha(
                    self.experts,
                    self.top_k,
                    a,
                    drift,
                    seed::derive(self.seed, "layer-popularity", &[u64::from(l)]),
                )
            })
            .collect()
    }
}

/// Generates `steps × layers` records in (step, layer) order into `sink` and
/// returns the metadata they conform to. Output depends only on the config.
pub fn generate_trace(cfg: &GeneratorConfig, sink: &mut impl TraceSink) -> Result<TraceMetadata> {
    let meta = cfg.metadata();
    meta.validate()?;
    if cfg.tokens_per_step == 0 {
        return Err(Error::param("tokens_per_step", "must be positive"));
    }
    let placement = make_placement(cfg.experts, cfg.ep, cfg.placement)?;
    let routers = cfg.routers()?;
    let bpt = meta.bytes_per_token() as f64;
    if let Some(t) = &cfg.timing {
        t.validate()?;
        if t.p != cfg.ep {
            return Err(Error::Dimension {
                what: "timing topology ranks",
                expected: cfg.ep,
                actual: t.p,
            });
        }
    }

    let mut start = 0;
    while start < cfg.steps {
        let end = (start + BATCH_STEPS).min(cfg.steps);
        let work: Vec<(u64, u32)> = (start..end)
            .flat_map(|s| (0..cfg.layers).map(move |l| (s, l)))
            .collect();
        let batch: Vec<StepRecord> = work
            .par_iter()
            .map(|&(step, layer)| {
                let router = &routers[layer as usize];
                let drift_seed = seed::derive(cfg.seed, "layer-drift", &[u64::from(layer)]);
                let weights = router.popularity_at(step, drift_seed)?;
                let (s, e) = route_step(
                    cfg.tokens_per_step,
                    &weights,
                    cfg.top_k,
                    &placement,
                    seed::derive(cfg.seed, "layer-route", &[u64::from(layer)]),
                    step,
                )?;
                let rank_dispatch_ms = match &cfg.timing {
                    Some(t) => Some(
                        completion_time(&s, t, bpt)?
                            .per_rank_time
                            .into_iter()
                            .map(|sec| sec * 1e3)
                            .collect(),
                    ),
                    None => None,
                };
                Ok(StepRecord {
                    step,
                    layer,
                    send_counts: s,
                    expert_loads: cfg.expert_loads.then_some(e),
                    rank_dispatch_ms,
                })
            })
            .collect::<Result<_>>()?;
        for rec in &batch {
            sink.write_record(rec)?;
        }
        start = end;
    }
    Ok(meta)
}
