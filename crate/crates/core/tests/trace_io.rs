use std::io::{BufRead, BufReader, Write};

use skewscope::trace::{read_trace, FileTraceWriter, SendCounts, StepRecord, TraceReader};
use skewscope::workload::{generate_trace, GeneratorConfig};
use skewscope::Error;

#[test]
fn generator_output_validates_and_a_decrement_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.jsonl");
    let mut cfg = GeneratorConfig::new(16, 2, 4, 0.7, 21);
    cfg.tokens_per_step = 400;
    cfg.steps = 3;
    let meta = cfg.metadata();
    let mut w = FileTraceWriter::create(&path, &meta).unwrap();
    generate_trace(&cfg, &mut w).unwrap();
    w.finish().unwrap();
    let t = read_trace(&path).unwrap();
    assert_eq!(t.records.len(), 3);

    // Drop one token copy from the second record (and its expert tally).
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
    let v = rec["send_counts"][0][0].as_u64().unwrap();
    let (row, col) = if v > 0 { (0, 0) } else { (0, 1) };
    let cell = rec["send_counts"][row][col].as_u64().unwrap();
    rec["send_counts"][row][col] = (cell - 1).into();
    let loads = rec["expert_loads"].as_array_mut().unwrap();
    let hot = loads.iter().position(|x| x.as_u64().unwrap() > 0).unwrap();
    loads[hot] = (loads[hot].as_u64().unwrap() - 1).into();
    lines[2] = rec.to_string();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    match read_trace(&path) {
        Err(Error::InvalidRecord {
            step: 1, reason, ..
        }) => assert!(reason.contains("row"), "{reason}"),
        other => panic!("expected row-sum violation, got {other:?}"),
    }
}

#[test]
fn streaming_write_of_ten_thousand_steps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("long.jsonl.gz");
    let mut cfg = GeneratorConfig::new(4, 1, 2, 1.0, 0);
    cfg.tokens_per_step = 8;
    let meta = cfg.metadata();
    let mut w = FileTraceWriter::create(&path, &meta).unwrap();
    let s = SendCounts::from_rows(&[vec![2, 2], vec![1, 3]]).unwrap();
    for step in 0..10_000u64 {
        let rec = StepRecord {
            step,
            layer: 0,
            send_counts: s.clone(),
            expert_loads: None,
            rank_dispatch_ms: None,
        };
        w.write_record(&rec).unwrap();
    }
    w.finish().unwrap();
    let mut reader = TraceReader::open(&path).unwrap();
    assert_eq!(reader.metadata().ep, 2);
    let n = reader.by_ref().inspect(|r| assert!(r.is_ok())).count();
    assert_eq!(n, 10_000);
}

#[test]
fn malformed_line_number_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, r#"{{"model":"mha","condition":"mock","ep":2,"tp":1,"experts":2,"topk":1,"gbs":1,"seqlen":1,"hidden":1,"bytes_per_elem":1}}"#).unwrap();
    writeln!(f, r#"{{"step":0,"layer":0,"send_counts":[[1,0],[0,1]]}}"#).unwrap();
    writeln!(f, r#"{{"step":1,"layer":0,"send_counts":[[1,0],[0,-1]]}}"#).unwrap();
    drop(f);
    let err = read_trace(&path).unwrap_err().to_string();
    assert!(
        err.contains(":3:") && err.contains("send_counts[1][1]"),
        "{err}"
    );
    let lines = BufReader::new(std::fs::File::open(&path).unwrap())
        .lines()
        .count();
    assert_eq!(lines, 3);
}
