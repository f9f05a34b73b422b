use std::collections::BTreeMap;

use super::correlation::pearson;
use crate::error::{Error, Result};
use crate::trace::DispatchTrace;

/// Lag-`ℓ` Pearson correlation of per-expert activation vectors for
/// `ℓ = 1..=max_lag`.
///
/// Within a layer, `r(ℓ)` is the mean over every pair of recorded steps whose
/// step numbers differ by exactly `ℓ`. Layer values are then averaged.
pub fn lag_correlation(trace: &DispatchTrace, max_lag: usize) -> Result<Vec<f64>> {
    if max_lag == 0 {
        return Err(Error::param("max_lag", "must be at least 1"));
    }
    let mut layers: BTreeMap<u32, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in &trace.records {
        let e = r
            .expert_loads
            .as_ref()
            .ok_or_else(|| Error::InvalidRecord {
                step: r.step,
                layer: r.layer,
                reason: "lag correlation needs expert_loads".into(),
            })?;
        layers
            .entry(r.layer)
            .or_default()
            .insert(r.step, e.as_scalars::<f64>());
    }
    if layers.is_empty() {
        return Err(Error::Empty("trace has no records"));
    }

    let mut out = vec![0.0; max_lag];
    for (layer, steps) in &layers {
        if steps.len() < max_lag + 1 {
            return Err(Error::Insufficient {
                what: format!("lag {max_lag} on layer {layer} (steps)"),
                needed: max_lag + 1,
                got: steps.len(),
            });
        }
        for (lag, slot) in out.iter_mut().enumerate().map(|(i, s)| (i as u64 + 1, s)) {
            let mut acc = 0.0;
            let mut n = 0usize;
            for (&t, a) in steps {
                if let Some(b) = steps.get(&(t + lag)) {
                    acc += pearson(a, b)?;
                    n += 1;
                }
            }
            if n == 0 {
                return Err(Error::Insufficient {
                    what: format!("step pairs {lag} apart on layer {layer}"),
                    needed: 1,
                    got: 0,
                });
            }
            *slot += acc / n as f64;
        }
    }
    let nl = layers.len() as f64;
    Ok(out.into_iter().map(|r| r / nl).collect())
}
