use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::types::{DispatchTrace, ExpertLoads, SendCounts, StepRecord, TraceMetadata};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct RecordOut<'a> {
    step: u64,
    layer: u32,
    send_counts: Vec<&'a [u64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expert_loads: Option<&'a [u64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank_dispatch_ms: Option<&'a [f64]>,
}

// Counts are read as signed so a negative entry can be reported by cell
// instead of surfacing as an opaque type error.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    step: u64,
    layer: u32,
    send_counts: Vec<Vec<i64>>,
    #[serde(default)]
    expert_loads: Option<Vec<i64>>,
    #[serde(default)]
    rank_dispatch_ms: Option<Vec<f64>>,
}

impl RecordIn {
    fn into_record(self) -> Result<StepRecord> {
        let (step, layer) = (self.step, self.layer);
        let bad = |reason: String| Error::InvalidRecord {
            step,
            layer,
            reason,
        };
        let mut rows = Vec::with_capacity(self.send_counts.len());
        for (i, row) in self.send_counts.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (j, &v) in row.iter().enumerate() {
                if v < 0 {
                    return Err(bad(format!("negative count {v} at send_counts[{i}][{j}]")));
                }
                out.push(v as u64);
            }
            rows.push(out);
        }
        let send_counts = SendCounts::from_rows(&rows).map_err(|e| bad(e.to_string()))?;
        let expert_loads = match self.expert_loads {
            None => None,
            Some(v) => {
                if let Some(l) = v.iter().position(|&x| x < 0) {
                    return Err(bad(format!("negative count {} at expert_loads[{l}]", v[l])));
                }
                let loads = v.into_iter().map(|x| x as u64).collect();
                Some(ExpertLoads::new(loads).map_err(|e| bad(e.to_string()))?)
            }
        };
        Ok(StepRecord {
            step,
            layer,
            send_counts,
            expert_loads,
            rank_dispatch_ms: self.rank_dispatch_ms,
        })
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Streaming reader: parses the header eagerly, then yields validated records
/// one line at a time.
pub struct TraceReader {
    path: PathBuf,
    lines: io::Lines<Box<dyn BufRead>>,
    line_no: usize,
    metadata: TraceMetadata,
    seen: HashSet<(u64, u32)>,
}

impl TraceReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let inner: Box<dyn BufRead> = if is_gz(&path) {
            Box::new(BufReader::new(MultiGzDecoder::new(file)))
        } else {
            Box::new(BufReader::new(file))
        };
        Self::from_reader(path, inner)
    }

    pub fn from_reader(path: PathBuf, reader: Box<dyn BufRead>) -> Result<Self> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| Error::io(&path, e))?,
            None => {
                return Err(Error::Malformed {
                    path,
                    line: 1,
                    reason: "missing metadata header".into(),
                })
            }
        };
        let metadata: TraceMetadata =
            serde_json::from_str(&header).map_err(|e| Error::Malformed {
                path: path.clone(),
                line: 1,
                reason: format!("metadata: {e}"),
            })?;
        metadata.validate().map_err(|e| Error::Malformed {
            path: path.clone(),
            line: 1,
            reason: e.to_string(),
        })?;
        Ok(Self {
            path,
            lines,
            line_no: 1,
            metadata,
            seen: HashSet::new(),
        })
    }

    pub fn metadata(&self) -> &TraceMetadata {
        &self.metadata
    }

    /// Prefixes record-level errors with `path:line`.
    fn locate(&self, e: Error) -> Error {
        match e {
            Error::InvalidRecord {
                step,
                layer,
                reason,
            } => Error::InvalidRecord {
                step,
                layer,
                reason: format!("{}:{}: {reason}", self.path.display(), self.line_no),
            },
            other => other,
        }
    }

    fn parse(&mut self, line: &str) -> Result<StepRecord> {
        let raw: RecordIn = serde_json::from_str(line).map_err(|e| Error::Malformed {
            path: self.path.clone(),
            line: self.line_no,
            reason: e.to_string(),
        })?;
        let rec = raw
            .into_record()
            .and_then(|r| r.validate(&self.metadata).map(|()| r))
            .map_err(|e| self.locate(e))?;
        if !self.seen.insert((rec.step, rec.layer)) {
            return Err(Error::InvalidRecord {
                step: rec.step,
                layer: rec.layer,
                reason: format!("duplicate (step, layer) pair at line {}", self.line_no),
            });
        }
        Ok(rec)
    }
}

impl Iterator for TraceReader {
    type Item = Result<StepRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.is_empty() {
                continue;
            }
            return Some(self.parse(&line));
        }
    }
}

/// Reads and fully validates a trace file.
pub fn read_trace(path: impl AsRef<Path>) -> Result<DispatchTrace> {
    let reader = TraceReader::open(path)?;
    let metadata = reader.metadata().clone();
    let records = reader.collect::<Result<Vec<_>>>()?;
    Ok(DispatchTrace { metadata, records })
}

enum Sink {
    Plain(BufWriter<File>),
    Gz(GzEncoder<BufWriter<File>>),
}

impl Write for Sink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Sink::Plain(w) => w.write(buf),
            Sink::Gz(w) => w.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Sink::Plain(w) => w.flush(),
            Sink::Gz(w) => w.flush(),
        }
    }
}

/// Streaming writer. Holds at most one serialized record in memory.
pub struct TraceWriter<W: Write> {
    out: W,
    path: PathBuf,
    metadata: TraceMetadata,
    line: Vec<u8>,
}

impl TraceWriter<BufWriter<File>> {
    /// Writes to a file without compression regardless of extension.
    pub fn create_plain(path: impl AsRef<Path>, metadata: &TraceMetadata) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Self::new(BufWriter::new(f), path, metadata)
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, path: PathBuf, metadata: &TraceMetadata) -> Result<Self> {
        metadata.validate()?;
        let mut w = Self {
            out,
            path,
            metadata: metadata.clone(),
            line: Vec::with_capacity(1024),
        };
        serde_json::to_writer(&mut w.line, metadata).expect("metadata serializes");
        w.flush_line()?;
        Ok(w)
    }

    fn flush_line(&mut self) -> Result<()> {
        self.line.push(b'\n');
        self.out
            .write_all(&self.line)
            .map_err(|e| Error::io(&self.path, e))?;
        self.line.clear();
        Ok(())
    }

    pub fn write_record(&mut self, rec: &StepRecord) -> Result<()> {
        rec.validate(&self.metadata)?;
        let out = RecordOut {
            step: rec.step,
            layer: rec.layer,
            send_counts: rec.send_counts.rows().collect(),
            expert_loads: rec.expert_loads.as_ref().map(|e| e.as_slice()),
            rank_dispatch_ms: rec.rank_dispatch_ms.as_deref(),
        };
        serde_json::to_writer(&mut self.line, &out).expect("record serializes");
        self.flush_line()
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.out)
    }
}

/// Gzip-aware writer chosen by file extension.
pub struct FileTraceWriter(TraceWriter<Sink>);

impl FileTraceWriter {
    pub fn create(path: impl AsRef<Path>, metadata: &TraceMetadata) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let f = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        let sink = if is_gz(&path) {
            Sink::Gz(GzEncoder::new(f, Compression::default()))
        } else {
            Sink::Plain(f)
        };
        Ok(Self(TraceWriter::new(sink, path, metadata)?))
    }

    pub fn write_record(&mut self, rec: &StepRecord) -> Result<()> {
        self.0.write_record(rec)
    }

    pub fn finish(self) -> Result<()> {
        let path = self.0.path.clone();
        match self.0.finish()? {
            Sink::Plain(mut w) => w.flush().map_err(|e| Error::io(&path, e)),
            Sink::Gz(g) => g
                .finish()
                .and_then(|mut w| w.flush())
                .map_err(|e| Error::io(&path, e)),
        }
    }
}

/// Writes `trace` to `path` (gzip when the extension is `.gz`).
pub fn write_trace(trace: &DispatchTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut w = FileTraceWriter::create(path, &trace.metadata)?;
    for rec in &trace.records {
        w.write_record(rec)?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> TraceMetadata {
        TraceMetadata {
            model: "mla".into(),
            condition: "wikitext".into(),
            ep: 2,
            tp: 1,
            experts: 4,
            topk: 2,
            gbs: 16,
            seqlen: 4096,
            hidden: 2048,
            bytes_per_elem: 2,
            local_tokens: None,
            provenance: None,
        }
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const HEADER: &str = r#"{"model":"mla","condition":"wikitext","ep":2,"tp":1,"experts":4,"topk":2,"gbs":16,"seqlen":4096,"hidden":2048,"bytes_per_elem":2}"#;

    #[test]
    fn empty_trace_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let t = DispatchTrace::new(meta(), vec![]).unwrap();
        write_trace(&t, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{HEADER}\n"));
        assert_eq!(read_trace(&path).unwrap(), t);
    }

    #[test]
    fn one_step_is_one_data_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let rec = StepRecord {
            step: 0,
            layer: 3,
            send_counts: SendCounts::from_rows(&[vec![1, 2], vec![3, 4]]).unwrap(),
            expert_loads: None,
            rank_dispatch_ms: Some(vec![0.0, 1.25]),
        };
        write_trace(&DispatchTrace::new(meta(), vec![rec]).unwrap(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[1],
            r#"{"step":0,"layer":3,"send_counts":[[1,2],[3,4]],"rank_dispatch_ms":[0.0,1.25]}"#
        );
    }

    #[test]
    fn negative_count_names_record_and_cell() {
        let f = write_lines(&[
            HEADER,
            r#"{"step":7,"layer":1,"send_counts":[[1,2],[3,-4]]}"#,
        ]);
        let err = read_trace(f.path()).unwrap_err().to_string();
        assert!(err.contains("step 7"), "{err}");
        assert!(err.contains("send_counts[1][1]"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_lines(&[
            HEADER,
            r#"{"step":0,"layer":0,"send_counts":[[1,2],[3,4]]}"#,
            r#"{"step":1,"layer":0,"send_counts":"oops"}"#,
        ]);
        let err = read_trace(f.path()).unwrap_err();
        match err {
            Error::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn p_mismatch_against_metadata() {
        let f = write_lines(&[
            HEADER,
            r#"{"step":0,"layer":0,"send_counts":[[1,2,0],[3,4,0],[0,0,0]]}"#,
        ]);
        let err = read_trace(f.path()).unwrap_err().to_string();
        assert!(err.contains("ep=2"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let f = write_lines(&[
            HEADER,
            r#"{"step":0,"layer":0,"send_counts":[[1,2],[3,4]],"extra":1}"#,
        ]);
        assert!(read_trace(f.path()).is_err());
    }

    #[test]
    fn gzip_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl.gz");
        let rec = StepRecord {
            step: 2,
            layer: 0,
            send_counts: SendCounts::from_rows(&[vec![5, 0], vec![1, 1]]).unwrap(),
            expert_loads: Some(ExpertLoads(vec![3, 0, 2, 2])),
            rank_dispatch_ms: None,
        };
        let t = DispatchTrace::new(meta(), vec![rec]).unwrap();
        write_trace(&t, &path).unwrap();
        let raw = std::fs::read(&path).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
        assert_eq!(read_trace(&path).unwrap(), t);
    }
}
