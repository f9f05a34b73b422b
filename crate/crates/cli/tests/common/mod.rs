//! Helpers shared by the integration targets.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use skewscope_cli::run;

pub fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/reference_cells.csv")
}

pub fn sk(args: &[&str]) -> i32 {
    let mut argv = vec!["skewscope".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run(argv)
}

pub fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

pub fn small_trace(dir: &Path) -> String {
    let t = p(dir, "t.jsonl");
    let code = sk(&[
        "generate",
        "--alpha",
        "0.4",
        "--experts",
        "16",
        "--top-k",
        "2",
        "--ep",
        "4",
        "--steps",
        "12",
        "--layers",
        "2",
        "--tokens-per-step",
        "2000",
        "--timing",
        "--model",
        "mha",
        "--condition",
        "wikitext",
        "--out",
        &t,
        "--seed",
        "3",
    ]);
    assert_eq!(code, 0);
    t
}

pub fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

/// Runs every subcommand into `dir` and returns all bytes written.
pub fn run_all(dir: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let t = p(dir, "t.jsonl");
    let w = |n: &str| p(dir, n);
    let cells = fixture();
    let cells = cells.to_str().unwrap();
    let base = ["--threads", threads, "--seed", "17"];
    let cmds: Vec<Vec<String>> = vec![
        vec![
            "generate",
            "--alpha",
            "0.4",
            "--experts",
            "16",
            "--top-k",
            "2",
            "--ep",
            "4",
            "--steps",
            "40",
            "--layers",
            "3",
            "--tokens-per-step",
            "4000",
            "--timing",
            "--model",
            "gqa",
            "--condition",
            "opus",
            "--placement",
            "random",
            "--out",
            &t,
        ],
        vec![
            "analyze",
            "--trace",
            &t,
            "--latency",
            "simulated",
            "--out",
            &w("analyze.csv"),
        ],
        vec!["simulate", "--trace", &t, "--out", &w("simulate.csv")],
        vec!["simulate", "--ep", "4,8,16,32", "--out", &w("regime.csv")],
        vec![
            "scan-ep",
            "--preset",
            "persistent_mock",
            "--experts",
            "32",
            "--top-k",
            "4",
            "--ep",
            "4,8,16,32",
            "--warmup",
            "3",
            "--measure",
            "10",
            "--tokens-per-step",
            "4000",
            "--out",
            &w("scan.csv"),
        ],
        vec![
            "lags",
            "--trace",
            &t,
            "--max-lag",
            "5",
            "--out",
            &w("lags.csv"),
        ],
        vec!["depth-profile", "--trace", &t, "--out", &w("depth.csv")],
        vec![
            "classify",
            "--mock",
            "0.343",
            "--real",
            "0.240",
            "--out",
            &w("classify1.csv"),
        ],
        vec!["classify", "--cells", cells, "--out", &w("classify.csv")],
        vec![
            "factorial",
            &t,
            "--latency",
            "measured",
            "--out",
            &w("factorial.csv"),
        ],
        vec![
            "correlate",
            "--cells",
            &w("synthetic_cells.csv"),
            "--out",
            &w("correlate.csv"),
        ],
        vec![
            "report",
            "--factorial",
            cells,
            "--heatmap",
            &w("heatmap.svg"),
        ],
    ]
    .into_iter()
    .map(|c| c.into_iter().map(str::to_string).collect())
    .collect();
    // Correlate needs latency per cell; write a small synthetic cells file.
    let mut rows = String::from("architecture,condition,gini_mean,p99_ms\n");
    for (a, off) in [("mha", 0.0), ("mla", 1.0)] {
        for (i, c) in ["mock", "shuffled", "remapped", "romansh"]
            .iter()
            .enumerate()
        {
            rows += &format!(
                "{a},{c},{},{}\n",
                0.1 + 0.05 * i as f64,
                off + 0.3 * i as f64 + 0.01 * (i % 2) as f64
            );
        }
    }
    fs::write(w("synthetic_cells.csv"), rows).unwrap();
    for c in cmds {
        let mut argv: Vec<&str> = c.iter().map(String::as_str).collect();
        argv.extend(base);
        assert_eq!(sk(&argv), 0, "{argv:?}");
    }
    outputs(dir)
}
