//! AlltoAll completion time over a two-tier (NVLink / InfiniBand) hierarchy.
//!
//! Each rank has an intra-node pipe shared by its node partners and an
//! inter-node pipe for everything else, in both directions. A rank finishes
//! after `fixed_latency` plus its slowest of the four channel transfers; the
//! collective finishes with the slowest rank. Self-traffic `S[j][j]` is free.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{SendCounts, TopologySpec};

/// Per-rank bytes on each of the four channels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelVolumes<F> {
    pub ingress_intra: Vec<F>,
    pub ingress_inter: Vec<F>,
    pub egress_intra: Vec<F>,
    pub egress_inter: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionReport<F> {
    /// Seconds per rank.
    pub per_rank_time: Vec<F>,
    /// Slowest rank, seconds.
    pub system_time: F,
    /// Ingress bytes per rank from node partners.
    pub intra_bytes: Vec<F>,
    /// Ingress bytes per rank from other nodes.
    pub inter_bytes: Vec<F>,
    /// Completion of the uniform matrix carrying the same total volume.
    pub baseline_time: F,
    /// `system_time / baseline_time`.
    pub skew_multiplier: F,
}

fn check<F: Scalar>(p: usize, topo: &TopologySpec<F>, bytes_per_token: F) -> Result<()> {
    topo.validate()?;
    if topo.p != p {
        return Err(Error::Dimension {
            what: "topology rank count",
            expected: p,
            actual: topo.p,
        });
    }
    if !(bytes_per_token >= F::zero()) || !bytes_per_token.is_finite() {
        return Err(Error::param(
            "bytes_per_token",
            "must be finite and non-negative",
        ));
    }
    Ok(())
}

fn volumes_by<F: Scalar>(
    topo: &TopologySpec<F>,
    bytes_per_token: F,
    entry: impl Fn(usize, usize) -> F,
) -> ChannelVolumes<F> {
    let p = topo.p;
    let mut v = ChannelVolumes {
        ingress_intra: vec![F::zero(); p],
        ingress_inter: vec![F::zero(); p],
        egress_intra: vec![F::zero(); p],
        egress_inter: vec![F::zero(); p],
    };
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let bytes = entry(i, j) * bytes_per_token;
            if topo.same_node(i, j) {
                v.egress_intra[i] = v.egress_intra[i] + bytes;
                v.ingress_intra[j] = v.ingress_intra[j] + bytes;
            } else {
                v.egress_inter[i] = v.egress_inter[i] + bytes;
                v.ingress_inter[j] = v.ingress_inter[j] + bytes;
            }
        }
    }
    v
}

pub fn volumes<F: Scalar>(
    s: &SendCounts,
    topo: &TopologySpec<F>,
    bytes_per_token: F,
) -> Result<ChannelVolumes<F>> {
    check(s.p(), topo, bytes_per_token)?;
    Ok(volumes_by(topo, bytes_per_token, |i, j| {
        F::from_count(s.get(i, j))
    }))
}

/// Number of (intra, inter) senders with nonzero traffic into `rank`.
pub fn partners(s: &SendCounts, topo: &TopologySpec<impl Scalar>, rank: usize) -> (usize, usize) {
    let mut intra = 0;
    let mut inter = 0;
    for i in (0..s.p()).filter(|&i| i != rank && s.get(i, rank) > 0) {
        if topo.same_node(i, rank) {
            intra += 1;
        } else {
            inter += 1;
        }
    }
    (intra, inter)
}

fn rank_times<F: Scalar>(topo: &TopologySpec<F>, v: &ChannelVolumes<F>) -> Vec<F> {
    (0..topo.p)
        .map(|j| {
            let busiest = (v.ingress_intra[j] / topo.bw_intra)
                .max(v.ingress_inter[j] / topo.bw_inter)
                .max(v.egress_intra[j] / topo.bw_intra)
                .max(v.egress_inter[j] / topo.bw_inter);
            topo.fixed_latency + busiest
        })
        .collect()
}

fn max_of<F: Scalar>(v: &[F]) -> F {
    v.iter().copied().fold(F::neg_infinity(), F::max)
}

/// Completion time of the matrix with every entry `total / P²`.
fn uniform_time<F: Scalar>(topo: &TopologySpec<F>, total: F, bytes_per_token: F) -> F {
    let p = F::from_usize(topo.p).unwrap();
    let each = total / (p * p);
    max_of(&rank_times(
        topo,
        &volumes_by(topo, bytes_per_token, |_, _| each),
    ))
}

fn ratio<F: Scalar>(num: F, den: F) -> F {
    if num == den {
        F::one()
    } else {
        num / den
    }
}

pub fn completion_time<F: Scalar>(
    s: &SendCounts,
    topo: &TopologySpec<F>,
    bytes_per_token: F,
) -> Result<CompletionReport<F>> {
    let v = volumes(s, topo, bytes_per_token)?;
    let per_rank_time = rank_times(topo, &v);
    let system_time = max_of(&per_rank_time);
    let baseline_time = uniform_time(topo, F::from_count(s.total()), bytes_per_token);
    Ok(CompletionReport {
        skew_multiplier: ratio(system_time, baseline_time),
        per_rank_time,
        system_time,
        intra_bytes: v.ingress_intra,
        inter_bytes: v.ingress_inter,
        baseline_time,
    })
}

/// `(baseline_seconds, multiplier)` with `baseline * multiplier == system_time`.
pub fn skew_baseline_decomposition<F: Scalar>(
    s: &SendCounts,
    topo: &TopologySpec<F>,
    bytes_per_token: F,
) -> Result<(F, F)> {
    let r = completion_time(s, topo, bytes_per_token)?;
    Ok((r.baseline_time, r.skew_multiplier))
}

/// Balanced dispatch: every rank routes `tokens_per_rank * top_k` token copies
/// spread evenly over all `p` destinations.
pub fn uniform_send_counts(p: usize, tokens_per_rank: u64, top_k: u64) -> Result<SendCounts> {
    let row = tokens_per_rank * top_k;
    if p == 0 || row % p as u64 != 0 {
        return Err(Error::param(
            "tokens_per_rank",
            format!("{row} token copies do not split evenly over {p} ranks"),
        ));
    }
    SendCounts::from_row_major(p, vec![row / p as u64; p * p])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(p: usize) -> TopologySpec<f64> {
        TopologySpec::with_defaults(p)
    }

    #[test]
    fn single_node_has_no_inter_traffic() {
        let s = uniform_send_counts(4, 100, 4).unwrap();
        let v = volumes(&s, &topo(4), 10.0).unwrap();
        assert!(v.ingress_inter.iter().all(|&b| b == 0.0));
        assert!(v.egress_inter.iter().all(|&b| b == 0.0));
        assert_eq!(v.ingress_intra[0], 3.0 * 100.0 * 10.0);
    }

    #[test]
    fn partner_split_matches_node_layout() {
        for (p, intra, inter) in [(4, 3, 0), (8, 3, 4), (16, 3, 12), (32, 3, 28)] {
            let s = uniform_send_counts(p, 64, 1).unwrap();
            for r in 0..p {
                assert_eq!(partners(&s, &topo(p), r), (intra, inter), "p={p} rank {r}");
            }
        }
    }

    #[test]
    fn uniform_multiplier_is_one() {
        let s = uniform_send_counts(16, 4096, 8).unwrap();
        let r = completion_time(&s, &topo(16), 4096.0).unwrap();
        assert_eq!(r.skew_multiplier, 1.0);
        assert_eq!(r.baseline_time, r.system_time);
    }

    #[test]
    fn hot_column_multiplier() {
        // 16 ranks, off-hot entries a, hot column 5a: hot column sum is 4x the
        // mean column sum. Hot-rank inter ingress 12*5a vs uniform 12*1.25a.
        let p = 16;
        let a = 1000u64;
        let mut data = vec![a; p * p];
        for i in 0..p {
            data[i * p + 5] = 5 * a;
        }
        let s = SendCounts::from_row_major(p, data).unwrap();
        let mut t = topo(p);
        t.fixed_latency = 0.0;
        let r = completion_time(&s, &t, 4096.0).unwrap();
        assert!((r.skew_multiplier - 4.0).abs() < 1e-12);
        t.fixed_latency = 20e-6;
        let r = completion_time(&s, &t, 4096.0).unwrap();
        assert!(
            (r.skew_multiplier - 4.0).abs() / 4.0 < 0.10,
            "{}",
            r.skew_multiplier
        );
    }

    #[test]
    fn self_traffic_is_free() {
        let s = SendCounts::from_rows(&[vec![1000, 0], vec![0, 1000]]).unwrap();
        let r = completion_time(&s, &topo(2), 4096.0).unwrap();
        assert_eq!(r.system_time, 20e-6);
    }

    #[test]
    fn zero_bandwidth_rejected() {
        let s = uniform_send_counts(4, 4, 1).unwrap();
        let mut t = topo(4);
        t.bw_inter = 0.0;
        assert!(completion_time(&s, &t, 1.0).is_err());
        assert!(completion_time(&s, &topo(8), 1.0).is_err());
    }

    #[test]
    fn works_in_f32() {
        let s = uniform_send_counts(8, 64, 2).unwrap();
        let r = completion_time(&s, &TopologySpec::<f32>::with_defaults(8), 4096.0f32).unwrap();
        assert_eq!(r.skew_multiplier, 1.0f32);
    }
}
