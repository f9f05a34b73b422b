//! Imbalance statistics over count vectors.
//!
//! Per-rank Gini has attainable maximum `(P-1)/P` (one rank absorbs every
//! token), not 1. All-zero inputs are errors: reporting 0 would read as
//! perfect balance.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{ExpertLoads, Placement, RankLoads};

fn check_nonneg<F: Scalar>(values: &[F], what: &'static str) -> Result<F> {
    if values.is_empty() {
        return Err(Error::Empty(what));
    }
    let mut total = F::zero();
    for &v in values {
        if !(v >= F::zero()) || !v.is_finite() {
            return Err(Error::param(
                what,
                format!("entry {v} is not a finite non-negative value"),
            ));
        }
        total = total + v;
    }
    if total <= F::zero() {
        return Err(Error::AllZero(what));
    }
    Ok(total)
}

/// Gini coefficient of a non-negative vector via the sorted rank-weighted sum
/// `Σ_j (2j - P - 1) c_(j) / (P Σ c)`. Range `[0, (P-1)/P]`.
pub fn gini<F: Scalar>(values: &[F]) -> Result<F> {
    let total = check_nonneg(values, "gini")?;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let p = sorted.len();
    let pf = F::from_usize(p).unwrap();
    let num: F = sorted
        .iter()
        .enumerate()
        .map(|(idx, &c)| {
            let w = F::from_i64(2 * (idx as i64 + 1) - p as i64 - 1).unwrap();
            w * c
        })
        .sum();
    Ok((num / (pf * total)).max(F::zero()))
}

/// Gini of integer counts in exact rational arithmetic.
pub fn gini_exact(counts: &[u64]) -> Result<Ratio<i128>> {
    if counts.is_empty() {
        return Err(Error::Empty("gini"));
    }
    let total: i128 = counts.iter().map(|&c| c as i128).sum();
    if total == 0 {
        return Err(Error::AllZero("gini"));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let p = sorted.len() as i128;
    let num: i128 = sorted
        .iter()
        .enumerate()
        .map(|(idx, &c)| (2 * (idx as i128 + 1) - p - 1) * c as i128)
        .sum();
    Ok(Ratio::new(num, p * total))
}

/// `max(values) / mean(values)`, always `>= 1`.
pub fn max_mean<F: Scalar>(values: &[F]) -> Result<F> {
    let total = check_nonneg(values, "max_mean")?;
    let max = values.iter().copied().fold(F::zero(), F::max);
    let n = F::from_usize(values.len()).unwrap();
    Ok(max * n / total)
}

/// Settings for the moment-matched Dirichlet concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletConfig<F> {
    /// Component variance below which the estimate is `+∞`.
    pub variance_floor: F,
    /// Lower clamp for vertex-like inputs whose variance no positive `α` attains.
    pub min_alpha: F,
    /// Allowed deviation of `Σ p` from 1.
    pub simplex_tol: F,
}

impl<F: Scalar> Default for DirichletConfig<F> {
    fn default() -> Self {
        Self {
            variance_floor: F::lit(1e-12),
            min_alpha: F::lit(1e-3),
            simplex_tol: F::lit(1e-9),
        }
    }
}

/// Moment-matched symmetric Dirichlet concentration of one proportion vector.
///
/// Treats the `P` components as one draw: with `V` the mean squared deviation
/// of the components from `1/P`, returns `α = ((1 - 1/P) / (P V) - 1) / P`.
/// Returns `F::infinity()` when `V` is below `cfg.variance_floor`, and
/// `cfg.min_alpha` when the matched value falls at or below it.
pub fn dirichlet_alpha<F: Scalar>(proportions: &[F], cfg: &DirichletConfig<F>) -> Result<F> {
    let p = proportions.len();
    if p < 2 {
        return Err(Error::param("proportions", "need at least 2 components"));
    }
    let total = check_nonneg(proportions, "dirichlet_alpha")?;
    if (total - F::one()).abs() > cfg.simplex_tol {
        return Err(Error::param(
            "proportions",
            format!("components sum to {total}, not 1"),
        ));
    }
    let pf = F::from_usize(p).unwrap();
    let centre = F::one() / pf;
    let var = proportions
        .iter()
        .map(|&x| (x - centre) * (x - centre))
        .sum::<F>()
        / pf;
    if var < cfg.variance_floor {
        return Ok(F::infinity());
    }
    let alpha = ((F::one() - centre) / (pf * var) - F::one()) / pf;
    Ok(if alpha > cfg.min_alpha {
        alpha
    } else {
        cfg.min_alpha
    })
}

/// [`dirichlet_alpha`] of the proportions `c_j / Σ c`.
pub fn dirichlet_alpha_of_counts<F: Scalar>(counts: &[u64], cfg: &DirichletConfig<F>) -> Result<F> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::AllZero("dirichlet_alpha"));
    }
    let t = F::from_count(total);
    let props: Vec<F> = counts.iter().map(|&c| F::from_count(c) / t).collect();
    // Rounding can push Σ p off 1 by a few ulps; the tolerance absorbs it.
    dirichlet_alpha(&props, cfg)
}

/// `max_mean(e) * P / E`: no balanced placement of the experts on `p` ranks
/// achieves a lower per-rank max/mean.
pub fn rank_ratio_lower_bound<F: Scalar>(e: &ExpertLoads, p: usize) -> Result<F> {
    let experts = e.experts();
    if p == 0 || experts % p != 0 {
        return Err(Error::Divisibility { experts, ranks: p });
    }
    let mm: F = max_mean(&e.as_scalars::<F>())?;
    Ok(mm * F::from_usize(p).unwrap() / F::from_usize(experts).unwrap())
}

/// Aggregates per-expert loads onto the ranks that host them.
pub fn expert_to_rank_loads(e: &ExpertLoads, placement: &Placement) -> Result<RankLoads> {
    if e.experts() != placement.experts() {
        return Err(Error::Dimension {
            what: "placement experts",
            expected: e.experts(),
            actual: placement.experts(),
        });
    }
    let mut c = vec![0u64; placement.ranks()];
    for (expert, &load) in e.as_slice().iter().enumerate() {
        c[placement.rank_of(expert)] += load;
    }
    Ok(RankLoads(c))
}

/// How a window of per-step rank loads reduces to one Gini value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GiniMode {
    /// Gini of each step, then the mean.
    #[default]
    PerStep,
    /// Gini of the counts summed over the window.
    Pooled,
}

pub fn window_gini<F: Scalar>(steps: &[RankLoads], mode: GiniMode) -> Result<F> {
    if steps.is_empty() {
        return Err(Error::Empty("window_gini"));
    }
    match mode {
        GiniMode::PerStep => {
            let mut acc = F::zero();
            for s in steps {
                acc = acc + gini(&s.as_scalars::<F>())?;
            }
            Ok(acc / F::from_usize(steps.len()).unwrap())
        }
        GiniMode::Pooled => {
            let p = steps[0].0.len();
            let mut pooled = vec![0u64; p];
            for s in steps {
                if s.0.len() != p {
                    return Err(Error::Dimension {
                        what: "rank loads length",
                        expected: p,
                        actual: s.0.len(),
                    });
                }
                for (acc, &v) in pooled.iter_mut().zip(&s.0) {
                    *acc += v;
                }
            }
            gini(&crate::scalar::counts_as::<F>(&pooled))
        }
    }
}

/// Window statistics over per-step scalar values. Percentiles use the
/// nearest-rank convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary<F> {
    pub count: usize,
    pub mean: F,
    /// Sample standard deviation (`n - 1` denominator); 0 for a single value.
    pub stdev: F,
    pub p50: F,
    pub p99: F,
    pub min: F,
    pub max: F,
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(percent/100 * n)`.
pub fn nearest_rank<F: Copy>(sorted: &[F], percent: u32) -> F {
    assert!(!sorted.is_empty() && percent <= 100);
    let n = sorted.len();
    let rank = ((percent as usize * n).div_ceil(100)).max(1);
    sorted[rank - 1]
}

pub fn summarize<F: Scalar>(values: &[F]) -> Result<MetricSummary<F>> {
    if values.is_empty() {
        return Err(Error::Empty("summarize needs at least one value"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::param("values", "NaN in metric stream"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = values.len();
    let nf = F::from_usize(n).unwrap();
    let mean = values.iter().copied().sum::<F>() / nf;
    let stdev = if !mean.is_finite() {
        F::infinity()
    } else if n < 2 {
        F::zero()
    } else {
        let ss: F = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
        (ss / F::from_usize(n - 1).unwrap()).sqrt()
    };
    Ok(MetricSummary {
        count: n,
        mean,
        stdev,
        p50: nearest_rank(&sorted, 50),
        p99: nearest_rank(&sorted, 99),
        min: sorted[0],
        max: sorted[n - 1],
    })
}
