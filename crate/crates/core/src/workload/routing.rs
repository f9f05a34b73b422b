use std::borrow::Cow;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::trace::{ExpertLoads, Placement, SendCounts};

/// Tokens per independently seeded routing chunk.
const CHUNK: usize = 1 << 15;

/// One draw from a symmetric Dirichlet(`alpha`) over `experts` categories.
///
/// Gamma variates are drawn in log space as `Gamma(a+1) * U^(1/a)` so that
/// small concentrations do not underflow to all-zero. The same form is used
/// for every `a`, which keeps a fixed seed's draw continuous in `a`.
pub fn sample_popularity(experts: usize, alpha: f64, seed: u64) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::param(
            "alpha",
            format!("{alpha} must be positive and finite"),
        ));
    }
    if experts == 0 {
        return Err(Error::param("experts", "must be positive"));
    }
    let mut rng = seed::rng(seed, "popularity", &[experts as u64]);
    let gamma = Gamma::new(alpha + 1.0, 1.0).map_err(|e| Error::param("alpha", e.to_string()))?;
    let logs: Vec<f64> = (0..experts)
        .map(|_| {
            let g: f64 = gamma.sample(&mut rng);
            let u: f64 = rng.random::<f64>();
            g.ln() + u.max(f64::MIN_POSITIVE).ln() / alpha
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|&l| (l - top).exp()).collect();
    let s: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / s).collect())
}

/// Per-step popularity resampling: at step `t` the popularity is a fresh
/// Dirichlet draw with concentration interpolated geometrically from
/// `alpha_start` to `alpha_end` over `steps` steps (held at `alpha_end` after).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSchedule {
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub steps: u64,
}

impl DriftSchedule {
    /// Resampling every step at a constant concentration.
    pub fn constant(alpha: f64) -> Self {
        Self {
            alpha_start: alpha,
            alpha_end: alpha,
            steps: 1,
        }
    }

    pub fn alpha_at(&self, step: u64) -> f64 {
        if self.steps == 0 {
            return self.alpha_end;
        }
        let frac = (step.min(self.steps) as f64) / self.steps as f64;
        self.alpha_start * (self.alpha_end / self.alpha_start).powf(frac)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_start", self.alpha_start),
            ("alpha_end", self.alpha_end),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(
                    name,
                    format!("{v} must be positive and finite"),
                ));
            }
        }
        Ok(())
    }
}

/// Router: expert selection propensities plus top-k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterModel {
    pub experts: usize,
    pub top_k: usize,
    pub popularity: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSchedule>,
}

impl RouterModel {
    pub fn new(top_k: usize, popularity: Vec<f64>, drift: Option<DriftSchedule>) -> Result<Self> {
        let r = Self {
            experts: popularity.len(),
            top_k,
            popularity,
            drift,
        };
        r.validate()?;
        Ok(r)
    }

    /// Router whose popularity is one Dirichlet(`alpha`) draw.
    pub fn from_alpha(
        experts: usize,
        top_k: usize,
        alpha: f64,
        drift: Option<DriftSchedule>,
        seed: u64,
    ) -> Result<Self> {
        Self::new(top_k, sample_popularity(experts, alpha, seed)?, drift)
    }

    pub fn uniform(experts: usize, top_k: usize) -> Result<Self> {
        Self::new(top_k, vec![1.0 / experts as f64; experts], None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.experts == 0 || self.popularity.len() != self.experts {
            return Err(Error::param("popularity", "length must equal expert count"));
        }
        if self.top_k == 0 || self.top_k > self.experts {
            return Err(Error::param(
                "top_k",
                format!("{} must be in 1..={}", self.top_k, self.experts),
            ));
        }
        if self
            .popularity
            .iter()
            .any(|&p| !(p >= 0.0) || !p.is_finite())
        {
            return Err(Error::param(
                "popularity",
                "entries must be finite and non-negative",
            ));
        }
        let s: f64 = self.popularity.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::param("popularity", format!("sums to {s}, not 1")));
        }
        if let Some(d) = &self.drift {
            d.validate()?;
        }
        Ok(())
    }

    /// Popularity in effect at `step`. Without drift this is the fixed vector.
    pub fn popularity_at(&self, step: u64, seed: u64) -> Result<Cow<'_, [f64]>> {
        match &self.drift {
            None => Ok(Cow::Borrowed(&self.popularity)),
            Some(d) => Ok(Cow::Owned(sample_popularity(
                self.experts,
                d.alpha_at(step),
                seed::derive(seed, "drift", &[step]),
            )?)),
        }
    }
}

/// Successive weighted sampling of `k` distinct experts.
///
/// Draws from an alias table and rejects repeats; after a bounded number of
/// rejections the remaining picks switch to exponential keys over the experts
/// not yet chosen. Both routes draw the next expert from the remaining
/// experts in proportion to weight, so the switch does not change the
/// distribution. Zero-weight experts are only chosen once every positive-weight
/// expert is taken, uniformly among themselves.
pub(crate) struct TopKSampler<'a> {
    weights: &'a [f64],
    alias: WeightedAliasIndex<f64>,
    k: usize,
    cap: usize,
}

impl<'a> TopKSampler<'a> {
    pub(crate) fn new(weights: &'a [f64], k: usize) -> Result<Self> {
        let alias = WeightedAliasIndex::new(weights.to_vec())
            .map_err(|e| Error::param("popularity", e.to_string()))?;
        Ok(Self {
            weights,
            alias,
            k,
            cap: 16 * k + 64,
        })
    }

    pub(crate) fn pick(&self, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        out.clear();
        let mut attempts = 0;
        while out.len() < self.k {
            if attempts == self.cap {
                self.finish_with_keys(rng, out);
                return;
            }
            attempts += 1;
            let i = self.alias.sample(rng);
            if !out.contains(&i) {
                out.push(i);
            }
        }
    }

    fn finish_with_keys(&self, rng: &mut ChaCha8Rng, out: &mut Vec<usize>) {
        let mut keys: Vec<(u8, f64, usize)> = (0..self.weights.len())
            .filter(|i| !out.contains(i))
            .map(|i| {
                let w = self.weights[i];
                if w > 0.0 {
                    let e: f64 = Exp1.sample(rng);
                    (0, e / w, i)
                } else {
                    (1, rng.random::<f64>(), i)
                }
            })
            .collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let need = self.k - out.len();
        out.extend(keys.into_iter().take(need).map(|(_, _, i)| i));
    }
}

/// Runs `visit` over every token's chosen experts in fixed-size chunks, each
/// chunk with its own derived RNG, and folds the per-chunk accumulators in
/// chunk order.
fn route_chunks<A, I, V>(
    tokens: usize,
    weights: &[f64],
    k: usize,
    seed: u64,
    step: u64,
    init: I,
    visit: V,
) -> Result<Vec<A>>
where
    A: Send,
    I: Fn(usize) -> A + Sync,
    V: Fn(&mut A, usize, &[usize]) + Sync,
{
    let sampler = TopKSampler::new(weights, k)?;
    let chunks = tokens.div_ceil(CHUNK);
    Ok((0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(tokens);
            let mut rng = seed::rng(seed, "route", &[step, c as u64]);
            let mut acc = init(hi - lo);
            let mut picks = Vec::with_capacity(k);
            for tok in lo..hi {
                sampler.pick(&mut rng, &mut picks);
                visit(&mut acc, tok, &picks);
            }
            acc
        })
        .collect())
}

/// Per-expert loads of `tokens` tokens routed top-`k` under `weights`.
/// Consumes the same random stream as [`route_tokens`] for the same
/// `(seed, step)`.
pub fn route_expert_loads(
    tokens: usize,
    weights: &[f64],
    k: usize,
    seed: u64,
    step: u64,
) -> Result<ExpertLoads> {
    let e = weights.len();
    let parts = route_chunks(
        tokens,
        weights,
        k,
        seed,
        step,
        |_| vec![0u64; e],
        |acc, _, picks| {
            for &x in picks {
                acc[x] += 1;
            }
        },
    )?;
    let mut loads = vec![0u64; e];
    for part in parts {
        for (a, b) in loads.iter_mut().zip(part) {
            *a += b;
        }
    }
    ExpertLoads::new(loads)
}

/// Chosen experts per token; token `i` originates on rank `i mod P`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenAssignments {
    top_k: usize,
    experts: usize,
    choices: Vec<u32>,
}

impl TokenAssignments {
    pub fn tokens(&self) -> usize {
        self.choices.len() / self.top_k
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn experts_of(&self, token: usize) -> &[u32] {
        &self.choices[token * self.top_k..(token + 1) * self.top_k]
    }

    pub fn origin_rank(&self, token: usize, p: usize) -> usize {
        token % p
    }

    pub fn expert_loads(&self) -> ExpertLoads {
        let mut loads = vec![0u64; self.experts];
        for &x in &self.choices {
            loads[x as usize] += 1;
        }
        ExpertLoads(loads)
    }

    /// Send counts for this routing decision under `placement`, with tokens
    /// spread round-robin over `placement.ranks()` origin ranks.
    pub fn send_counts(&self, placement: &Placement) -> Result<SendCounts> {
        if placement.experts() != self.experts {
            return Err(Error::Dimension {
                what: "placement experts",
                expected: self.experts,
                actual: placement.experts(),
            });
        }
        let p = placement.ranks();
        let mut s = SendCounts::zeros(p);
        for tok in 0..self.tokens() {
            let src = self.origin_rank(tok, p);
            for &x in self.experts_of(tok) {
                s.add(src, placement.rank_of(x as usize), 1);
            }
        }
        Ok(s)
    }
}

/// Routes `tokens` tokens at step 0 of `router`.
pub fn route_tokens(
    tokens: usize,
    router: &RouterModel,
    p: usize,
    placement: &Placement,
    seed: u64,
) -> Result<(TokenAssignments, SendCounts, ExpertLoads)> {
    router.validate()?;
    if tokens == 0 {
        return Err(Error::param("tokens", "must be at least 1"));
    }
    if placement.ranks() != p || placement.experts() != router.experts {
        return Err(Error::param(
            "placement",
            format!(
                "placement maps {} experts to {} ranks; router has {} experts, p = {p}",
                placement.experts(),
                placement.ranks(),
                router.experts
            ),
        ));
    }
    let k = router.top_k;
    let weights = router.popularity_at(0, seed)?;
    let parts = route_chunks(
        tokens,
        &weights,
        k,
        seed,
        0,
        |n| Vec::with_capacity(n * k),
        |acc: &mut Vec<u32>, _, picks| acc.extend(picks.iter().map(|&x| x as u32)),
    )?;
    let mut choices = Vec::with_capacity(tokens * k);
    for part in parts {
        choices.extend(part);
    }
    let assignments = TokenAssignments {
        top_k: k,
        experts: router.experts,
        choices,
    };
    let s = assignments.send_counts(placement)?;
    let e = assignments.expert_loads();
    Ok((assignments, s, e))
}

/// Routes one dispatch of `tokens` tokens, returning the send counts under
/// `placement` and the per-expert loads without materializing assignments.
pub(crate) fn route_step(
    tokens: usize,
    weights: &[f64],
    k: usize,
    placement: &Placement,
    seed: u64,
    step: u64,
) -> Result<(SendCounts, ExpertLoads)> {
    let p = placement.ranks();
    let e = weights.len();
    let parts = route_chunks(
        tokens,
        weights,
        k,
        seed,
        step,
        |_| (SendCounts::zeros(p), vec![0u64; e]),
        |(s, loads): &mut (SendCounts, Vec<u64>), tok, picks| {
            let src = tok % p;
            for &x in picks {
                loads[x] += 1;
                s.add(src, placement.rank_of(x), 1);
            }
        },
    )?;
    let mut s = SendCounts::zeros(p);
    let mut loads = vec![0u64; e];
    for (ps, pl) in parts {
        for i in 0..p {
            for j in 0..p {
                s.add(i, j, ps.get(i, j));
            }
        }
        for (a, b) in loads.iter_mut().zip(pl) {
            *a += b;
        }
    }
    Ok((s, ExpertLoads(loads)))
}
