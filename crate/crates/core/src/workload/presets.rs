//! Class presets: router concentrations calibrated so that routing at the
//! reference scale lands per-rank Gini inside each class band.
//!
//! The constants in [`preset`] were found with [`calibrate_alpha`] (bisection
//! on `ln α` against the mean Gini of 20 seeded runs, root seed 2024) and are
//! re-checked by the test suite.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::placement::{make_placement, PlacementScheme};
use super::routing::{route_expert_loads, sample_popularity, DriftSchedule};
use crate::error::{Error, Result};
use crate::metrics::{expert_to_rank_loads, gini};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetClass {
    ResilientReal,
    ResilientMock,
    PersistentReal,
    PersistentMock,
    MixedReal,
    MixedMock,
}

impl PresetClass {
    pub const ALL: [PresetClass; 6] = [
        PresetClass::ResilientReal,
        PresetClass::ResilientMock,
        PresetClass::PersistentReal,
        PresetClass::PersistentMock,
        PresetClass::MixedReal,
        PresetClass::MixedMock,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetClass::ResilientReal => "resilient_real",
            PresetClass::ResilientMock => "resilient_mock",
            PresetClass::PersistentReal => "persistent_real",
            PresetClass::PersistentMock => "persistent_mock",
            PresetClass::MixedReal => "mixed_real",
            PresetClass::MixedMock => "mixed_mock",
        }
    }

    pub fn is_mock(self) -> bool {
        matches!(
            self,
            PresetClass::ResilientMock | PresetClass::PersistentMock | PresetClass::MixedMock
        )
    }

    /// Per-rank Gini band the preset targets at the reference scale.
    pub fn band(self) -> (f64, f64) {
        match self {
            PresetClass::ResilientReal => (0.10, 0.15),
            PresetClass::ResilientMock => (0.22, 0.25),
            PresetClass::PersistentReal => (0.24, 0.29),
            PresetClass::PersistentMock => (0.29, 0.38),
            PresetClass::MixedReal => (0.22, 0.26),
            PresetClass::MixedMock => (0.32, 0.36),
        }
    }
}

impl fmt::Display for PresetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetParams {
    pub class: PresetClass,
    pub alpha: f64,
    /// Mock presets resample popularity every step with concentration falling
    /// to a third of `alpha` over 200 steps, emulating the batch-size drift
    /// seen with random token ids.
    pub drift: Option<DriftSchedule>,
}

/// Steps over which a mock preset's concentration decays.
pub const MOCK_DRIFT_STEPS: u64 = 200;
/// `alpha_end / alpha_start` for mock presets.
pub const MOCK_DRIFT_RATIO: f64 = 1.0 / 3.0;

/// Concentrations from `examples/calibrate_presets.rs` at [`ReferenceScale::default`].
pub fn preset(class: PresetClass) -> PresetParams {
    let alpha = match class {
        PresetClass::ResilientReal => 1.8961,
        PresetClass::ResilientMock => 0.5601,
        PresetClass::PersistentReal => 0.4244,
        PresetClass::PersistentMock => 0.2501,
        PresetClass::MixedReal => 0.5301,
        PresetClass::MixedMock => 0.2413,
    };
    let drift = class.is_mock().then_some(DriftSchedule {
        alpha_start: alpha,
        alpha_end: alpha * MOCK_DRIFT_RATIO,
        steps: MOCK_DRIFT_STEPS,
    });
    PresetParams {
        class,
        alpha,
        drift,
    }
}

/// Routing geometry the presets are calibrated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceScale {
    pub experts: usize,
    pub top_k: usize,
    pub ranks: usize,
    pub tokens: usize,
}

impl Default for ReferenceScale {
    fn default() -> Self {
        Self {
            experts: 128,
            top_k: 8,
            ranks: 16,
            tokens: 650_000,
        }
    }
}

/// Per-rank Gini (block placement) of one routed step under a fresh
/// Dirichlet(`alpha`) popularity drawn from `seed`.
pub fn reference_gini(alpha: f64, scale: &ReferenceScale, seed: u64) -> Result<f64> {
    let pop = sample_popularity(scale.experts, alpha, seed::derive(seed, "preset-pop", &[]))?;
    let loads = route_expert_loads(
        scale.tokens,
        &pop,
        scale.top_k,
        seed::derive(seed, "preset-route", &[]),
        0,
    )?;
    let placement = make_placement(scale.experts, scale.ranks, PlacementScheme::Block)?;
    let ranks = expert_to_rank_loads(&loads, &placement)?;
    gini(&ranks.as_scalars::<f64>())
}

/// Mean [`reference_gini`] over `runs` seeds derived from `seed`.
pub fn mean_reference_gini(
    alpha: f64,
    scale: &ReferenceScale,
    runs: usize,
    seed: u64,
) -> Result<f64> {
    if runs == 0 {
        return Err(Error::param("runs", "must be positive"));
    }
    let mut acc = 0.0;
    for r in 0..runs {
        acc += reference_gini(alpha, scale, seed::derive(seed, "preset-run", &[r as u64]))?;
    }
    Ok(acc / runs as f64)
}

/// Bisection on `ln α` for the concentration whose mean reference Gini equals
/// `target`. Gini falls as `α` grows.
pub fn calibrate_alpha(
    target: f64,
    scale: &ReferenceScale,
    runs: usize,
    seed: u64,
    iterations: usize,
) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::param("target", format!("{target} outside (0, 1)")));
    }
    let (mut lo, mut hi) = (1e-2f64.ln(), 1e2f64.ln());
    let g_lo = mean_reference_gini(lo.exp(), scale, runs, seed)?;
    let g_hi = mean_reference_gini(hi.exp(), scale, runs, seed)?;
    if !(g_hi <= target && target <= g_lo) {
        return Err(Error::param(
            "target",
            format!("{target} not bracketed by [{g_hi}, {g_lo}] over alpha in [1e-2, 1e2]"),
        ));
    }
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if mean_reference_gini(mid.exp(), scale, runs, seed)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for c in PresetClass::ALL {
            assert_eq!(c.as_str().parse::<PresetClass>().unwrap(), c);
        }
        assert!("bogus".parse::<PresetClass>().is_err());
    }

    #[test]
    fn only_mock_presets_drift() {
        for c in PresetClass::ALL {
            assert_eq!(preset(c).drift.is_some(), c.is_mock());
        }
    }

    #[test]
    fn calibration_inverts_small_scale_curve() {
        let scale = ReferenceScale {
            experts: 32,
            top_k: 4,
            ranks: 8,
            tokens: 20_000,
        };
        let a = calibrate_alpha(0.2, &scale, 4, 1, 18).unwrap();
        let g = mean_reference_gini(a, &scale, 4, 1).unwrap();
        assert!((g - 0.2).abs() < 0.01, "alpha {a} gives {g}");
    }
}
