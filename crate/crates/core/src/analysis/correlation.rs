use std::collections::BTreeMap;

use serde::Serialize;

use super::factorial::CellResult;
use super::labels::Architecture;
use crate::error::{Error, Result};
use crate::metrics::nearest_rank;
use crate::seed::SplitMix64;

fn centered(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            what: "correlation inputs",
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Insufficient {
            what: "correlation points".into(),
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::param("correlation inputs", "non-finite value"));
    }
    Ok(())
}

/// Sample Pearson correlation, clamped to `[-1, 1]`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mx, sx) = centered(x);
    let (my, sy) = centered(y);
    if sx == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    if sy == 0.0 {
        return Err(Error::ZeroVariance("y"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok((sxy / (sx * sy).sqrt()).clamp(-1.0, 1.0))
}

/// Least-squares `(slope, intercept)` of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    check_pair(x, y)?;
    let (mx, sx) = centered(x);
    let (my, _) = centered(y);
    if sx == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sx;
    Ok((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupFit {
    pub architecture: Architecture,
    pub n: usize,
    pub r: f64,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub groups: Vec<GroupFit>,
    pub pooled_n: usize,
    pub pooled_r: f64,
}

/// Mean Gini against P99 latency: per-architecture fits plus the pooled
/// correlation over every cell.
pub fn gini_latency_correlation(cells: &[CellResult]) -> Result<CorrelationResult> {
    let mut groups: BTreeMap<Architecture, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for c in cells {
        let p99 = c.p99_ms.ok_or_else(|| {
            Error::param(
                "cells",
                format!(
                    "cell ({}, {}) has no P99 latency",
                    c.architecture, c.condition
                ),
            )
        })?;
        let g = groups.entry(c.architecture).or_default();
        g.0.push(c.gini.mean);
        g.1.push(p99);
    }
    let mut fits = Vec::with_capacity(groups.len());
    let (mut all_x, mut all_y) = (Vec::new(), Vec::new());
    for (arch, (x, y)) in groups {
        if x.len() < 3 {
            return Err(Error::Insufficient {
                what: format!("cells for architecture {arch}"),
                needed: 3,
                got: x.len(),
            });
        }
        let r = pearson(&x, &y)?;
        let (slope, intercept) = linear_fit(&x, &y)?;
        fits.push(GroupFit {
            architecture: arch,
            n: x.len(),
            r,
            slope,
            intercept,
        });
        all_x.extend(x);
        all_y.extend(y);
    }
    if all_x.len() < 3 {
        return Err(Error::Insufficient {
            what: "cells".into(),
            needed: 3,
            got: all_x.len(),
        });
    }
    Ok(CorrelationResult {
        groups: fits,
        pooled_n: all_x.len(),
        pooled_r: pearson(&all_x, &all_y)?,
    })
}

/// `|r|` over random re-pairings of `x` and `y`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullDistribution {
    pub abs_r: Vec<f64>,
}

impl NullDistribution {
    /// Nearest-rank percentile of `|r|`.
    pub fn percentile(&self, percent: u32) -> f64 {
        nearest_rank(&self.abs_r, percent)
    }

    pub fn mean(&self) -> f64 {
        self.abs_r.iter().sum::<f64>() / self.abs_r.len() as f64
    }
}

pub fn permutation_null(
    x: &[f64],
    y: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<NullDistribution> {
    pearson(x, y)?;
    if permutations == 0 {
        return Err(Error::param("permutations", "must be positive"));
    }
    let mut rng = SplitMix64::new(crate::seed::derive(seed, "permutation-null", &[]));
    let mut shuffled = y.to_vec();
    let mut abs_r: Vec<f64> = (0..permutations)
        .map(|_| {
            rng.shuffle(&mut shuffled);
            pearson(x, &shuffled).map(f64::abs)
        })
        .collect::<Result<_>>()?;
    abs_r.sort_by(f64::total_cmp);
    Ok(NullDistribution { abs_r })
}
