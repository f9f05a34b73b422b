use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use skewscope::analysis::{
    cell_from_trace, classify, depth_profile, ep_scan, gini_latency_correlation, lag_correlation,
    permutation_null, AssignmentMode, CellOptions, CellResult, FactorialMatrix, LatencyPooling,
    LatencySource, Window,
};
use skewscope::comm::{completion_time, partners, uniform_send_counts};
use skewscope::metrics::{
    dirichlet_alpha_of_counts, gini, max_mean, nearest_rank, rank_ratio_lower_bound, summarize,
    window_gini, DirichletConfig, GiniMode, MetricSummary,
};
use skewscope::trace::{rank_loads_from, read_trace, FileTraceWriter, StepRecord};
use skewscope::workload::{
    generate_trace, preset, DriftSchedule, GeneratorConfig, RouterModel, TraceSink,
};
use skewscope::{seed, DispatchTrace};

use crate::error::{CliError, CliResult, Context};
use crate::heatmap::{render_svg, HeatmapData, PLOT_COLUMNS};
use crate::output::{num, opt, summary_path, write_csv, write_summary, write_text, Provenance};
use crate::{
    AnalyzeArgs, ClassifyArgs, Command, CorrelateArgs, DepthArgs, FactorialArgs, GenerateArgs,
    LagsArgs, LatencyArg, ModeArg, PoolingArg, ReportArgs, RouterChoice, ScanEpArgs, SimulateArgs,
};

pub fn dispatch(cmd: &Command, seed: u64) -> CliResult<()> {
    match cmd {
        Command::Analyze(a) => analyze(a, seed),
        Command::Generate(a) => generate(a, seed),
        Command::Simulate(a) => simulate(a, seed),
        Command::ScanEp(a) => scan_ep(a, seed),
        Command::Correlate(a) => correlate(a, seed),
        Command::Lags(a) => lags(a, seed),
        Command::DepthProfile(a) => depth(a, seed),
        Command::Classify(a) => classify_cmd(a, seed),
        Command::Factorial(a) => factorial(a, seed),
        Command::Report(a) => report(a, seed),
    }
}

fn provenance(
    schema: &'static str,
    command: &str,
    args: &impl Serialize,
    seed: u64,
) -> CliResult<Provenance> {
    Provenance::new(schema, seed, &json!({ "command": command, "args": args }))
}

fn summary_for(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| summary_path(out))
}

fn load_trace(path: &Path) -> CliResult<DispatchTrace> {
    read_trace(path).context(format!("reading {}", path.display()))
}

#[derive(Deserialize)]
struct CellRow {
    architecture: String,
    condition: String,
    gini_mean: f64,
    #[serde(default, deserialize_with = "csv::invalid_option")]
    p99_ms: Option<f64>,
}

/// Reads a cells CSV; `#` lines are provenance comments.
pub fn read_cells(path: &Path) -> CliResult<Vec<CellResult>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
    let mut cells = Vec::new();
    for (i, row) in rdr.deserialize::<CellRow>().enumerate() {
        let row =
            row.map_err(|e| CliError::Data(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        let cell = (|| {
            CellResult::from_gini(
                row.architecture.parse()?,
                row.condition.parse()?,
                row.gini_mean,
                row.p99_ms,
            )
        })()
        .context(format!("{}: row {}", path.display(), i + 1))?;
        cells.push(cell);
    }
    if cells.is_empty() {
        return Err(CliError::Data(format!("{}: no cells", path.display())));
    }
    Ok(cells)
}

fn router_alpha(choice: &RouterChoice, no_drift: bool) -> (f64, Option<DriftSchedule>) {
    match (choice.preset, choice.alpha) {
        (Some(p), _) => {
            let params = preset(p);
            (params.alpha, if no_drift { None } else { params.drift })
        }
        (None, Some(a)) => (a, None),
        (None, None) => unreachable!("clap enforces one router source"),
    }
}

fn analyze(a: &AnalyzeArgs, seed: u64) -> CliResult<()> {
    let prov = provenance("skewscope.analyze.v1", "analyze", a, seed)?;
    let trace = load_trace(&a.trace)?;
    let meta = &trace.metadata;
    let p = meta.ep;
    let bpt = meta.bytes_per_token() as f64;
    let topo = a.topology.spec(p);
    let cfg = DirichletConfig::<f64>::default();

    struct Row {
        cells: Vec<String>,
        gini: f64,
        alpha: f64,
        max_mean: f64,
        latency: Option<f64>,
    }
    let rows = trace
        .records
        .par_iter()
        .map(|r| -> CliResult<Row> {
            let at = format!("step {} layer {}", r.step, r.layer);
            let c = rank_loads_from(&r.send_counts);
            let g = gini(&c.as_scalars::<f64>()).context(&at)?;
            let alpha = dirichlet_alpha_of_counts(c.as_slice(), &cfg).context(&at)?;
            let mm = max_mean(&c.as_scalars::<f64>()).context(&at)?;
            let (mm_e, bound) = match &r.expert_loads {
                Some(e) => (
                    Some(max_mean(&e.as_scalars::<f64>()).context(&at)?),
                    Some(rank_ratio_lower_bound::<f64>(e, p).context(&at)?),
                ),
                None => (None, None),
            };
            let (latency, mult) = match a.latency {
                LatencyArg::None => (None, None),
                LatencyArg::Measured => (r.system_dispatch_ms(), None),
                LatencyArg::Simulated => {
                    let rep = completion_time(&r.send_counts, &topo, bpt).context(&at)?;
                    (Some(rep.system_time * 1e3), Some(rep.skew_multiplier))
                }
            };
            Ok(Row {
                cells: vec![
                    r.step.to_string(),
                    r.layer.to_string(),
                    num(g),
                    num(alpha),
                    num(mm),
                    opt(mm_e),
                    opt(bound),
                    opt(latency),
                    opt(mult),
                ],
                gini: g,
                alpha,
                max_mean: mm,
                latency,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    write_csv(
        &a.out,
        &prov,
        &[
            "step",
            "layer",
            "rank_gini",
            "alpha",
            "rank_max_mean",
            "expert_max_mean",
            "pe_lower_bound",
            "dispatch_ms",
            "skew_multiplier",
        ],
        &rows.iter().map(|r| r.cells.clone()).collect::<Vec<_>>(),
    )?;

    let ginis: Vec<f64> = rows.iter().map(|r| r.gini).collect();
    let gini_summary = match GiniMode::from(a.gini_mode) {
        GiniMode::PerStep => summarize(&ginis)?,
        GiniMode::Pooled => {
            let loads: Vec<_> = trace
                .records
                .iter()
                .map(|r| rank_loads_from(&r.send_counts))
                .collect();
            summarize(&[window_gini::<f64>(&loads, GiniMode::Pooled)?])?
        }
    };
    let mut lat: Vec<f64> = rows.iter().filter_map(|r| r.latency).collect();
    lat.sort_by(f64::total_cmp);
    let result = json!({
        "records": rows.len(),
        "metadata": meta,
        "gini": gini_summary,
        "alpha": summarize(&rows.iter().map(|r| r.alpha).collect::<Vec<_>>())?,
        "rank_max_mean": summarize(&rows.iter().map(|r| r.max_mean).collect::<Vec<_>>())?,
        "latency_samples": lat.len(),
        "p99_ms": (!lat.is_empty()).then(|| nearest_rank(&lat, 99)),
    });
    write_summary(&summary_for(&a.summary, &a.out), &prov, &result)
}

/// Trace writer that keeps per-record Gini for the summary.
struct Tee {
    writer: FileTraceWriter,
    gini: Vec<f64>,
}

impl TraceSink for Tee {
    fn write_record(&mut self, rec: &StepRecord) -> skewscope::Result<()> {
        self.writer.write_record(rec)?;
        self.gini.push(gini(
            &rank_loads_from(&rec.send_counts).as_scalars::<f64>(),
        )?);
        Ok(())
    }
}

fn generate(a: &GenerateArgs, seed: u64) -> CliResult<()> {
    let prov = provenance("skewscope.generate.v1", "generate", a, seed)?;
    let (alpha, preset_drift) = router_alpha(&a.router, a.no_drift);
    let drift = match a.drift_ratio {
        Some(r) => Some(DriftSchedule {
            alpha_start: alpha,
            alpha_end: alpha * r,
            steps: a.drift_steps,
        }),
        None => preset_drift,
    };
    let cfg = GeneratorConfig {
        model: a.model.clone(),
        condition: a.condition.clone(),
        experts: a.experts,
        top_k: a.top_k,
        ep: a.ep,
        tp: a.tp,
        tokens_per_step: a.tokens_per_step.unwrap_or(a.seqlen as usize * a.ep),
        steps: a.steps,
        layers: a.layers,
        placement: a.placement.scheme(seed),
        alpha,
        layer_alphas: (!a.layer_alphas.is_empty()).then(|| a.layer_alphas.clone()),
        drift,
        gbs: a.gbs,
        seqlen: a.seqlen,
        hidden: a.hidden,
        bytes_per_elem: a.bytes_per_elem,
        timing: a.timing.then(|| a.topology.spec(a.ep)),
        expert_loads: !a.no_expert_loads,
        seed,
    };
    let meta = cfg.metadata();
    let writer = FileTraceWriter::create(&a.out, &meta).context("creating trace")?;
    let mut tee = Tee {
        writer,
        gini: Vec::new(),
    };
    generate_trace(&cfg, &mut tee).context("generating trace")?;
    tee.writer.finish().context("finishing trace")?;
    let result = json!({
        "records": tee.gini.len(),
        "metadata": meta,
        "gini": summarize(&tee.gini)?,
    });
    write_summary(&summary_for(&a.summary, &a.out), &prov, &result)
}

fn simulate(a: &SimulateArgs, seed: u64) -> CliResult<()> {
    let prov = provenance("skewscope.simulate.v1", "simulate", a, seed)?;
    if let Some(path) = &a.trace {
        let trace = load_trace(path)?;
        let topo = a.topology.spec(trace.metadata.ep);
        let bpt = trace.metadata.bytes_per_token() as f64;
        let reps = trace
            .records
            .par_iter()
            .map(|r| completion_time(&r.send_counts, &topo, bpt).map(|c| (r.step, r.layer, c)))
            .collect::<skewscope::Result<Vec<_>>>()?;
        let rows: Vec<Vec<String>> = reps
            .iter()
            .map(|(s, l, c)| {
                let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
                vec![
                    s.to_string(),
                    l.to_string(),
                    num(c.system_time * 1e3),
                    num(c.baseline_time * 1e3),
                    num(c.skew_multiplier),
                    num(max(&c.intra_bytes)),
                    num(max(&c.inter_bytes)),
                ]
            })
            .collect();
        write_csv(
            &a.out,
            &prov,
            &[
                "step",
                "layer",
                "system_ms",
                "baseline_ms",
                "skew_multiplier",
                "max_intra_bytes",
                "max_inter_bytes",
            ],
            &rows,
        )?;
        let mut ms: Vec<f64> = reps.iter().map(|r| r.2.system_time * 1e3).collect();
        let mult: Vec<f64> = reps.iter().map(|r| r.2.skew_multiplier).collect();
        ms.sort_by(f64::total_cmp);
        let result = json!({
            "mode": "trace",
            "records": reps.len(),
            "system_ms": summarize(&ms)?,
            "skew_multiplier": summarize(&mult)?,
        });
        return write_summary(&summary_for(&a.summary, &a.out), &prov, &result);
    }

    let bpt = (a.hidden * a.bytes_per_elem) as f64;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &p in &a.ep {
        let topo = a.topology.spec(p);
        let s = uniform_send_counts(p, a.tokens_per_rank, a.top_k).context(format!("ep {p}"))?;
        let c = completion_time(&s, &topo, bpt).context(format!("ep {p}"))?;
        let (intra, inter) = partners(&s, &topo, 0);
        rows.push(vec![
            p.to_string(),
            p.div_ceil(topo.gpus_per_node).to_string(),
            intra.to_string(),
            inter.to_string(),
            num(c.system_time * 1e3),
            num(c.baseline_time * 1e3),
            num(c.skew_multiplier),
        ]);
        points.push(json!({
            "ep": p,
            "intra_partners": intra,
            "inter_partners": inter,
            "system_ms": c.system_time * 1e3,
            "skew_multiplier": c.skew_multiplier,
        }));
    }
    write_csv(
        &a.out,
        &prov,
        &[
            "ep",
            "nodes",
            "intra_partners",
            "inter_partners",
            "system_ms",
            "baseline_ms",
            "skew_multiplier",
        ],
        &rows,
    )?;
    let first = points.first().and_then(|p| p["system_ms"].as_f64());
    let last = points.last().and_then(|p| p["system_ms"].as_f64());
    let result = json!({
        "mode": "uniform",
        "points": points,
        "last_over_first": first.zip(last).map(|(f, l)| l / f),
    });
    write_summary(&summary_for(&a.summary, &a.out), &prov, &result)
}

fn summary_cells(s: &MetricSummary<f64>) -> [String; 4] {
    [num(s.mean), num(s.stdev), num(s.p50), num(s.p99)]
}

fn scan_ep(a: &ScanEpArgs, seed: u64) -> CliResult<()> {
    let prov = provenance("skewscope.scan-ep.v1", "scan-ep", a, seed)?;
    let (alpha, drift) = router_alpha(&a.router, a.no_drift);
    let router = RouterModel::from_alpha(
        a.experts,
        a.top_k,
        alpha,
        drift,
        seed::derive(seed, "cli-router", &[]),
    )?;
    let mode = match a.mode {
        ModeArg::Fixed => AssignmentMode::Fixed,
        ModeArg::Resampled => AssignmentMode::Resampled,
    };
    let window = Window::new(a.warmup, a.measure)?;
    let res = ep_scan(
        &router,
        &a.ep,
        a.placement.scheme(seed),
        window,
        a.tokens_per_step,
        mode,
        seed,
    )?;
    let rows: Vec<Vec<String>> = res
        .points
        .iter()
        .map(|p| {
            let mut r = vec![p.ep.to_string()];
            r.extend(summary_cells(&p.max_mean));
            r.extend(summary_cells(&p.rank_gini));
            r
        })
        .collect();
    write_csv(
        &a.out,
        &prov,
        &[
            "ep",
            "max_mean_mean",
            "max_mean_stdev",
            "max_mean_p50",
            "max_mean_p99",
            "rank_gini_mean",
            "rank_gini_stdev",
            "rank_gini_p50",
            "rank_gini_p99",
        ],
        &rows,
    )?;
    write_summary(&summary_for(&a.summary, &a.out), &prov, &res)
}

fn correlate(a: &CorrelateArgs, seed: u64) -> CliResult<()> {
    let prov = provenance("skewscope.correlate.v1", "correlate", a, seed)?;
    let cells = read_cells(&a.cells)?;
    let res = gini_latency_correlation(&cells)?;
    let x: Vec<f64> = cells.iter().map(|c| c.gini.mean).collect();
    let y: Vec<f64> = cells.iter().filter_map(|c| c.p99_ms).collect();
    let perm = permutation_null(&x, &y, a.permutations, seed)?;
    let mut rows: Vec<Vec<String>> = res
        .groups
        .iter()
        .map(|g| {
            vec![
                g.architecture.to_string(),
                g.n.to_string(),
                num(g.r),
                num(g.slope),
                num(g.intercept),
            ]
        })
        .collect();
    rows.push(vec![
        "pooled".into(),
        res.pooled_n.to_string(),
        num(res.pooled_r),
        String::new(),
        String::new(),
    ]);
    write_csv(
        &a.out,
        &prov,
        &["group", "n", "r", "slope", "intercept"],
        &rows,
    )?;
    let result = json!({
        "correlation": res,
        "null": {
            "permutations": a.permutations,
            "abs_r_mean": perm.mean(),
            "abs_r_p95": perm.percentile(95),
            "abs_r_p99": perm.percentile(99),
        },
    });
    write_summary(&summary_for(&a.summary, &a.out), &prov, &result)
}

fn lags(a: &LagsArgs, seed: u64) -> CliResult<()> {
    let prov = provenance("skewscope.lags.v1", "lags", a, seed)?;
    let trace = load_trace(&a.trace)?;
    let r = lag_correlation(&trace, a.max_lag)?;
    let rows: Vec<Vec<String>> = r
        .iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), num(*v)])
        .collect();
    write_csv(&a.out, &prov, &["lag", "r"], &rows)?;
    write_summary(&summary_for(&a.summary, &a.out), &prov, &json!({ "r": r }))
}

fn depth(a: &DepthArgs, seed: u64) -> CliResult<()> {
    let prov = provenance("skewscope.depth-profile.v1", "depth-profile", a, seed)?;
    let trace = load_trace(&a.trace)?;
    let pts = depth_profile(&trace)?;
    let rows: Vec<Vec<String>> = pts
        .iter()
        .map(|p| {
            vec![
                p.layer.to_string(),
                num(p.depth_fraction),
                num(p.gini.mean),
                num(p.gini.stdev),
                num(p.gini.min),
                num(p.gini.max),
            ]
        })
        .collect();
    write_csv(
        &a.out,
        &prov,
        &[
            "layer",
            "depth_fraction",
            "gini_mean",
            "gini_stdev",
            "gini_min",
            "gini_max",
        ],
        &rows,
    )?;
    write_summary(
        &summary_for(&a.summary, &a.out),
        &prov,
        &json!({ "layers": pts }),
    )
}

const CLASSIFY_COLUMNS: [&str; 5] = ["architecture", "mock_gini", "real_gini", "ratio", "label"];

fn classify_cmd(a: &ClassifyArgs, seed: u64) -> CliResult<()> {
    let prov = provenance("skewscope.classify.v1", "classify", a, seed)?;
    let th = a.thresholds.thresholds();
    if let (Some(m), Some(r)) = (a.mock, a.real) {
        let label = classify(m, r, &th)?;
        let ratio = (r > 0.0).then(|| m / r);
        write_csv(
            &a.out,
            &prov,
            &CLASSIFY_COLUMNS,
            &[vec![
                String::new(),
                num(m),
                num(r),
                opt(ratio),
                label.to_string(),
            ]],
        )?;
        let result = json!({ "mock_gini": m, "real_gini": r, "ratio": ratio, "label": label });
        return write_summary(&summary_for(&a.summary, &a.out), &prov, &result);
    }
    let path = a
        .cells
        .as_ref()
        .expect("clap requires --cells without --mock");
    let m = FactorialMatrix::from_cells(read_cells(path)?, &th)?;
    let rows: Vec<Vec<String>> = m
        .ratios
        .iter()
        .map(|r| {
            vec![
                r.architecture.to_string(),
                opt(r.mock_gini),
                opt(r.best_real_gini),
                opt(r.ratio),
                r.class.map(|c| c.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(&a.out, &prov, &CLASSIFY_COLUMNS, &rows)?;
    write_summary(
        &summary_for(&a.summary, &a.out),
        &prov,
        &json!({ "architectures": m.ratios }),
    )
}

pub const CELL_COLUMNS: [&str; 11] = [
    "architecture",
    "condition",
    "gini_mean",
    "gini_stdev",
    "gini_p50",
    "gini_p99",
    "alpha_mean",
    "max_mean_mean",
    "max_mean_basis",
    "p99_ms",
    "row_best",
];

fn factorial(a: &FactorialArgs, seed: u64) -> CliResult<()> {
    let prov = provenance("skewscope.factorial.v1", "factorial", a, seed)?;
    let pooling = match a.pooling {
        PoolingArg::AllDispatches => LatencyPooling::AllDispatches,
        PoolingArg::PerLayerMean => LatencyPooling::PerLayerMean,
    };
    let cells = a
        .traces
        .par_iter()
        .map(|path| {
            let trace = load_trace(path)?;
            let latency = match a.latency {
                LatencyArg::None => LatencySource::None,
                LatencyArg::Measured => LatencySource::Measured,
                LatencyArg::Simulated => {
                    LatencySource::Simulated(a.topology.spec(trace.metadata.ep))
                }
            };
            let opts = CellOptions {
                gini_mode: a.gini_mode.into(),
                dirichlet: DirichletConfig::default(),
                latency,
                pooling,
            };
            cell_from_trace(&trace, &opts).context(path.display())
        })
        .collect::<CliResult<Vec<_>>>()?;
    let m = FactorialMatrix::from_cells(cells, &a.thresholds.thresholds())?;
    let rows: Vec<Vec<String>> = m
        .cells
        .iter()
        .map(|c| {
            let best = m
                .ratio(c.architecture)
                .is_some_and(|r| r.best_condition == c.condition);
            vec![
                c.architecture.to_string(),
                c.condition.to_string(),
                num(c.gini.mean),
                num(c.gini.stdev),
                num(c.gini.p50),
                num(c.gini.p99),
                num(c.alpha.mean),
                num(c.max_mean.mean),
                serde_json::to_value(c.max_mean_basis)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                opt(c.p99_ms),
                best.to_string(),
            ]
        })
        .collect();
    write_csv(&a.out, &prov, &CELL_COLUMNS, &rows)?;
    write_summary(&summary_for(&a.summary, &a.out), &prov, &m)
}

fn report(a: &ReportArgs, seed: u64) -> CliResult<()> {
    let prov = provenance("skewscope.report.v1", "report", a, seed)?;
    let m = FactorialMatrix::from_cells(read_cells(&a.factorial)?, &a.thresholds.thresholds())?;
    let data = HeatmapData::from_matrix(&m)?;
    write_text(&a.heatmap, &render_svg(&data, &prov.header().to_string()))?;
    let plot = a
        .plot_data
        .clone()
        .unwrap_or_else(|| a.heatmap.with_extension("csv"));
    write_csv(&plot, &prov, &PLOT_COLUMNS, &data.plot_rows())?;
    let result = json!({
        "rows": data.rows,
        "columns": data.cols,
        "values": data.values,
        "row_best": data.row_min,
        "architectures": m.ratios,
    });
    write_summary(&summary_for(&a.summary, &a.heatmap), &prov, &result)
}
