//! One PASS/FAIL line per acceptance criterion. Exits non-zero on any failure.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use skewscope::analysis::{
    cell_from_trace, classify, ep_scan, gini_latency_correlation, pearson, permutation_null,
    token_sweep, Architecture, AssignmentMode, CellOptions, CellResult, ClassLabel,
    ClassThresholds, Condition, FactorialMatrix, LatencyPooling, LatencySource, Window,
};
use skewscope::comm::{completion_time, uniform_send_counts};
use skewscope::metrics::{
    dirichlet_alpha, expert_to_rank_loads, gini, gini_exact, max_mean, rank_ratio_lower_bound,
    DirichletConfig,
};
use skewscope::seed::{derive, SplitMix64};
use skewscope::trace::{DispatchTrace, ExpertLoads, Placement, TopologySpec};
use skewscope::workload::{
    generate_trace, make_placement, mean_reference_gini, preset, remap_vocab, route_tokens,
    sample_popularity, shuffle_stream, unmap_vocab, vocab_permutation, GeneratorConfig,
    PlacementScheme, PresetClass, ReferenceScale, RouterModel,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mad_gini(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let s: f64 = x.iter().sum();
    let mut d = 0.0;
    for a in x {
        for b in x {
            d += (a - b).abs();
        }
    }
    d / (2.0 * n * s)
}

fn c1_gini_oracle() -> Outcome {
    let mut rng = SplitMix64::new(1);
    let vectors: Vec<Vec<f64>> = (0..1000)
        .map(|_| {
            let n = 2 + rng.below(255) as usize;
            let mut v: Vec<f64> = (0..n).map(|_| rng.below(1_000_000) as f64 / 7.0).collect();
            v[0] += 1.0;
            v
        })
        .collect();
    let t = Instant::now();
    let got: Vec<f64> = vectors.iter().map(|v| gini(v).unwrap()).collect();
    let elapsed = t.elapsed().as_secs_f64();
    let worst = vectors
        .iter()
        .zip(&got)
        .map(|(v, g)| (g - mad_gini(v)).abs())
        .fold(0.0, f64::max);
    let point = gini(&[0.0, 0.0, 0.0, 100.0]).unwrap();
    let exact = gini_exact(&[0, 0, 0, 100]).unwrap();
    ensure(
        worst <= 1e-12
            && point == 0.75
            && *exact.numer() * 4 == *exact.denom() * 3
            && elapsed < 1.0,
        format!("max |diff| {worst:.2e}, (0,0,0,100) -> {point}, 1000 vectors in {elapsed:.3}s"),
    )
}

fn c2_dirichlet_recovery() -> Outcome {
    let t = Instant::now();
    let cfg = DirichletConfig::<f64>::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, alpha) in [0.16, 1.0, 7.5, 40.0].into_iter().enumerate() {
        let est: f64 = (0..200u64)
            .map(|d| {
                let p =
                    sample_popularity(16, alpha, derive(2, "dirichlet", &[i as u64, d])).unwrap();
                dirichlet_alpha(&p, &cfg).unwrap()
            })
            .sum::<f64>()
            / 200.0;
        let rel = (est - alpha).abs() / alpha;
        ok &= rel <= 0.25;
        parts.push(format!("{alpha} -> {est:.3} ({:.1}%)", rel * 100.0));
    }
    let elapsed = t.elapsed().as_secs_f64();
    ensure(
        ok && elapsed < 10.0,
        format!("{}; {elapsed:.2}s", parts.join(", ")),
    )
}

const SCHEMES: [PlacementScheme; 3] = [
    PlacementScheme::Block,
    PlacementScheme::RoundRobin,
    PlacementScheme::Random(5),
];

fn c3_ep_invariance() -> Outcome {
    let router = RouterModel::from_alpha(128, 8, 0.3, None, 3).unwrap();
    let base = make_placement(128, 16, PlacementScheme::Block).unwrap();
    let (a, _, loads) = route_tokens(65_536, &router, 16, &base, 4).unwrap();
    let mut identical = true;
    for p in [4, 8, 16, 32] {
        for scheme in SCHEMES {
            let s = a
                .send_counts(&make_placement(128, p, scheme).unwrap())
                .unwrap();
            identical &= a.expert_loads() == loads && s.total() == loads.total();
        }
    }
    let w = Window::new(2, 8).unwrap();
    let fixed: Vec<f64> = SCHEMES
        .iter()
        .map(|&s| {
            ep_scan(
                &router,
                &[4, 8, 16, 32],
                s,
                w,
                16_384,
                AssignmentMode::Fixed,
                6,
            )
            .unwrap()
            .flatness_pct
        })
        .collect();
    let pm = preset(PresetClass::PersistentMock);
    let mock = RouterModel::from_alpha(128, 8, pm.alpha, pm.drift, 7).unwrap();
    let resampled = ep_scan(
        &mock,
        &[4, 8, 16, 32],
        PlacementScheme::Block,
        Window::new(50, 200).unwrap(),
        65_536,
        AssignmentMode::Resampled,
        8,
    )
    .unwrap();
    let mm: Vec<String> = resampled
        .points
        .iter()
        .map(|p| format!("{:.4}", p.max_mean.mean))
        .collect();
    ensure(
        identical && fixed.iter().all(|&f| f == 0.0) && resampled.flatness_pct <= 5.0,
        format!(
            "fixed loads identical {identical}, fixed flatness {fixed:?}%, resampled max/mean [{}] flatness {:.2}%",
            mm.join(", "),
            resampled.flatness_pct
        ),
    )
}

fn violates(e: &ExpertLoads, pl: &Placement) -> bool {
    let achieved: f64 =
        max_mean(&expert_to_rank_loads(e, pl).unwrap().as_scalars::<f64>()).unwrap();
    let bound: f64 = rank_ratio_lower_bound(e, pl.ranks()).unwrap();
    achieved < bound * (1.0 - 1e-12)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for i in 0..=rest.len() {
            let mut v = rest.clone();
            v.insert(i, n - 1);
            out.push(v);
        }
    }
    out
}

fn c4_bound() -> Outcome {
    let mut rng = SplitMix64::new(4);
    let (mut checked, mut bad) = (0u64, 0u64);
    for e in 1..=8usize {
        let perms = permutations(e);
        for p in (1..=e).filter(|p| e % p == 0) {
            for _ in 0..4 {
                let loads = ExpertLoads::new((0..e).map(|_| rng.below(50)).collect()).unwrap();
                if loads.total() == 0 {
                    continue;
                }
                for perm in &perms {
                    let map: Vec<usize> = perm.iter().map(|&slot| slot / (e / p)).collect();
                    checked += 1;
                    bad += violates(&loads, &Placement::new(p, map).unwrap()) as u64;
                }
            }
        }
    }
    let exhaustive = checked;
    for e in [64usize, 128] {
        let divisors: Vec<usize> = (2..=e).filter(|p| e % p == 0).collect();
        for i in 0..10_000u64 {
            let p = divisors[rng.below(divisors.len() as u64) as usize];
            let skew = 1 + rng.below(4);
            let loads = ExpertLoads::new((0..e).map(|_| rng.below(100).pow(skew as u32)).collect())
                .unwrap();
            if loads.total() == 0 {
                continue;
            }
            let pl = make_placement(
                e,
                p,
                PlacementScheme::Random(derive(4, "bound", &[e as u64, i])),
            )
            .unwrap();
            checked += 1;
            bad += violates(&loads, &pl) as u64;
        }
    }
    ensure(
        bad == 0,
        format!(
            "{exhaustive} exhaustive + {} random placements, {bad} violations",
            checked - exhaustive
        ),
    )
}

fn c5_regime() -> Outcome {
    let mut times = Vec::new();
    let mut worst = 0.0f64;
    for p in [4usize, 8, 16, 32] {
        let s = uniform_send_counts(p, 4096, 6).unwrap();
        let r = completion_time::<f64>(&s, &TopologySpec::with_defaults(p), 4096.0).unwrap();
        worst = worst.max((r.skew_multiplier - 1.0).abs());
        times.push(r.system_time * 1e3);
    }
    let ratio = times[3] / times[0];
    ensure(
        (10.0..=25.0).contains(&ratio) && worst <= 1e-9,
        format!(
            "EP4 {:.3} ms, EP32 {:.3} ms, ratio {ratio:.2}x, max |multiplier - 1| {worst:.1e}",
            times[0], times[3]
        ),
    )
}

fn c6_presets() -> Outcome {
    let scale = ReferenceScale::default();
    let rr = mean_reference_gini(preset(PresetClass::ResilientReal).alpha, &scale, 20, 61).unwrap();
    let pm =
        mean_reference_gini(preset(PresetClass::PersistentMock).alpha, &scale, 20, 62).unwrap();
    let counts = [10_000usize, 31_623, 100_000, 316_228, 1_000_000];
    let pr = preset(PresetClass::PersistentReal);
    let sweep = token_sweep(128, 8, pr.alpha, pr.drift, &counts, 20, 16, 63).unwrap();
    let means: Vec<f64> = sweep.iter().map(|s| s.gini.mean).collect();
    let (lo, hi) = means
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &m| {
            (a.min(m), b.max(m))
        });
    let flat = (hi - lo) / lo * 100.0;
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
    ensure(
        (0.08..=0.17).contains(&rr) && (0.29..=0.42).contains(&pm) && flat <= 5.0,
        format!(
            "resilient_real {rr:.4}, persistent_mock {pm:.4}, persistent_real sweep [{}] flatness {flat:.2}%",
            shown.join(", ")
        ),
    )
}

fn c7_classification() -> Outcome {
    let th = ClassThresholds::default();
    let quoted = [
        (0.235, 0.105, ClassLabel::DataResilient),
        (0.382, 0.245, ClassLabel::PersistentlyConcentrated),
        (0.343, 0.240, ClassLabel::Mixed),
    ];
    let labels_ok = quoted
        .iter()
        .all(|&(m, r, want)| classify(m, r, &th).unwrap() == want);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(common::fixture())
        .unwrap();
    let cells: Vec<CellResult> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            CellResult::from_gini(
                r[0].parse().unwrap(),
                r[1].parse().unwrap(),
                r[2].parse().unwrap(),
                None,
            )
            .unwrap()
        })
        .collect();
    let m = FactorialMatrix::from_cells(cells, &th).unwrap();
    let mha = m
        .ratio(Architecture::Mha)
        .and_then(|r| r.ratio)
        .unwrap_or(f64::NAN);
    let mamba = m
        .ratio(Architecture::Mamba2)
        .and_then(|r| r.ratio)
        .unwrap_or(f64::NAN);
    ensure(
        labels_ok && (mha - 2.24).abs() <= 0.01 && (mamba - 2.35).abs() <= 0.01,
        format!("quoted labels reproduced {labels_ok}, MHA {mha:.3}x, Mamba-2 {mamba:.3}x"),
    )
}

fn direct_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn c8_correlation() -> Outcome {
    let hidden = [2048u64, 4096, 3072, 2560, 1536];
    let alphas = [0.15, 0.25, 0.4, 0.7, 1.2, 2.5];
    let topo = TopologySpec::with_defaults(16);
    let opts = CellOptions {
        latency: LatencySource::Simulated(topo.clone()),
        pooling: LatencyPooling::PerLayerMean,
        ..CellOptions::default()
    };
    let mut cells = Vec::new();
    let (mut dg, mut dt) = (Vec::new(), Vec::new());
    for (a, arch) in Architecture::ALL.iter().enumerate() {
        for (c, cond) in Condition::ALL.iter().enumerate() {
            let mut cfg = GeneratorConfig::new(
                128,
                8,
                16,
                alphas[c],
                derive(8, "cell", &[a as u64, c as u64]),
            );
            cfg.model = arch.as_str().into();
            cfg.condition = cond.as_str().into();
            cfg.hidden = hidden[a];
            cfg.tokens_per_step = 32_768;
            // Several layers per cell average out single popularity draws.
            cfg.steps = 4;
            cfg.layers = 8;
            let mut recs = Vec::new();
            let meta = generate_trace(&cfg, &mut recs).unwrap();
            let trace = DispatchTrace::new(meta, recs).unwrap();
            let bpt = trace.metadata.bytes_per_token() as f64;
            for r in &trace.records {
                let loads = skewscope::trace::rank_loads_from(&r.send_counts);
                dg.push(gini(&loads.as_scalars::<f64>()).unwrap());
                dt.push(
                    completion_time(&r.send_counts, &topo, bpt)
                        .unwrap()
                        .system_time,
                );
            }
            cells.push(cell_from_trace(&trace, &opts).unwrap());
        }
    }
    let fit = gini_latency_correlation(&cells).unwrap();
    let min_r = fit.groups.iter().map(|g| g.r).fold(f64::INFINITY, f64::min);
    let null = permutation_null(&dg, &dt, 1000, 9).unwrap();
    let null99 = null.percentile(99);
    let gx: Vec<f64> = cells.iter().map(|c| c.gini.mean).collect();
    let gy: Vec<f64> = cells.iter().map(|c| c.p99_ms.unwrap()).collect();
    let pdiff = (pearson(&gx, &gy).unwrap() - direct_r(&gx, &gy))
        .abs()
        .max((pearson(&dg, &dt).unwrap() - direct_r(&dg, &dt)).abs());
    ensure(
        cells.len() >= 30 && min_r >= 0.95 && null99 < 0.2 && pdiff <= 1e-12,
        format!(
            "{} cells, min within-group r {min_r:.4}, pooled r {:.4}; null |r| p99 {null99:.4} over {} dispatches; pearson vs direct {pdiff:.1e}",
            cells.len(),
            fit.pooled_r,
            dg.len()
        ),
    )
}

fn histogram<K: Ord>(it: impl Iterator<Item = K>) -> BTreeMap<K, usize> {
    let mut h = BTreeMap::new();
    for k in it {
        *h.entry(k).or_insert(0) += 1;
    }
    h
}

fn bytes(v: &[u32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn c9_transforms() -> Outcome {
    let vocab = 1000u32;
    let ids: Vec<u32> = (0..100_000u32).map(|i| (i * 7 + i / 13) % vocab).collect();
    let sh = shuffle_stream(&ids, 11);
    let unigram = histogram(ids.iter()) == histogram(sh.iter());
    let bigram = histogram(ids.windows(2).map(|w| (w[0], w[1])))
        != histogram(sh.windows(2).map(|w| (w[0], w[1])));
    let sigma = vocab_permutation(vocab, 11);
    let mut sorted = sigma.clone();
    sorted.sort_unstable();
    let bijection = sorted == (0..vocab).collect::<Vec<_>>();
    let rm = remap_vocab(&ids, vocab, 11).unwrap();
    let positional = rm.iter().zip(&ids).all(|(&r, &x)| r == sigma[x as usize]);
    let inverse = unmap_vocab(&rm, vocab, 11).unwrap() == ids;
    let deterministic = bytes(&shuffle_stream(&ids, 11)) == bytes(&sh)
        && bytes(&remap_vocab(&ids, vocab, 11).unwrap()) == bytes(&rm)
        && shuffle_stream(&ids, 12) != sh;
    ensure(
        unigram && bigram && bijection && positional && inverse && deterministic,
        format!(
            "unigrams equal {unigram}, bigrams changed {bigram}, bijection {bijection}, positional {positional}, inverse {inverse}, deterministic {deterministic}"
        ),
    )
}

fn c10_determinism() -> Outcome {
    let d = tempfile::tempdir().unwrap();
    let reference = common::run_all(d.path(), "1");
    let mut diffs = Vec::new();
    for threads in ["2", "4", "1"] {
        let again = common::run_all(d.path(), threads);
        if again.len() != reference.len() {
            diffs.push(format!("file count at {threads} threads"));
        }
        for ((n, a), (_, b)) in reference.iter().zip(&again) {
            if a != b {
                diffs.push(format!("{n} at {threads} threads"));
            }
        }
    }
    ensure(
        diffs.is_empty(),
        format!(
            "{} output files compared at 1/2/4 threads; differing: {diffs:?}",
            reference.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gini oracle equivalence", c1_gini_oracle),
        ("dirichlet alpha recovery", c2_dirichlet_recovery),
        ("EP invariance", c3_ep_invariance),
        ("P/E bound soundness", c4_bound),
        ("topology regime", c5_regime),
        ("preset calibration", c6_presets),
        ("classification fixture", c7_classification),
        ("correlation pipeline", c8_correlation),
        ("condition transforms", c9_transforms),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(d) => println!("PASS criterion {}: {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
