//! ELBO / perplexity traces as CSV.
//!
//! ```text
//! # algo=esvi model=lda topics=8 ...
//! updates,seconds,elbo,perplexity
//! 0,0.0000000000000000e0,-2.5120935151450522e4,
//! ```
//!
//! Floats are written with 17 significant digits, enough to parse back to
//! the same bits. An absent perplexity is an empty field.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

pub const TRACE_HEADER: &str = "updates,seconds,elbo,perplexity";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// z̃ coordinates rewritten so far.
    pub updates: u64,
    pub seconds: f64,
    pub elbo: f64,
    pub perplexity: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    /// Run metadata in insertion order, written as `key=value` pairs.
    pub meta: Vec<(String, String)>,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Appends a record, refusing to let updates or seconds go backwards.
    pub fn push(&mut self, record: TraceRecord) -> Result<(), TraceError> {
        if let Some(prev) = self.records.last() {
            if record.updates < prev.updates || record.seconds < prev.seconds {
                return Err(TraceError::Format {
                    line: self.records.len() as u64 + 1,
                    message: "updates and seconds must be nondecreasing".into(),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trace_to<W: Write>(trace: &RunTrace, out: W) -> Result<(), TraceError> {
    let mut out = BufWriter::new(out);
    let meta: Vec<String> = trace.meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
    writeln!(out, "# {}", meta.join(" "))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER.split(','))?;
    for r in &trace.records {
        let ppl = r.perplexity.map(float).unwrap_or_default();
        w.write_record([r.updates.to_string(), float(r.seconds), float(r.elbo), ppl])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(trace: &RunTrace, path: &Path) -> Result<(), TraceError> {
    write_trace_to(trace, File::create(path)?)
}

/// Streaming reader: metadata is parsed up front, records on demand.
pub struct TraceReader<R: BufRead> {
    pub meta: Vec<(String, String)>,
    rows: csv::StringRecordsIntoIter<R>,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(mut input: R) -> Result<Self, TraceError> {
        let mut first = String::new();
        input.read_line(&mut first)?;
        let comment = first
            .strip_prefix('#')
            .ok_or_else(|| TraceError::Format { line: 1, message: "missing '#' metadata line".into() })?;
        let meta = comment
            .split_whitespace()
            .map(|pair| {
                pair.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| TraceError::Format { line: 1, message: format!("bad metadata pair {pair:?}") })
            })
            .collect::<Result<_, _>>()?;
        let mut rows = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        if rows.headers()?.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
            return Err(TraceError::Format { line: 2, message: format!("header must be {TRACE_HEADER:?}") });
        }
        Ok(Self { meta, rows: rows.into_records() })
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let row = match self.rows.next()? {
            Ok(row) => row,
            Err(e) => return Some(Err(e.into())),
        };
        let line = row.position().map_or(0, |p| p.line() + 1);
        let bad = |message: String| TraceError::Format { line, message };
        let parse = |i: usize| -> Result<f64, TraceError> {
            row[i].parse().map_err(|_| bad(format!("invalid number {:?}", &row[i])))
        };
        Some((|| {
            if row.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", row.len())));
            }
            Ok(TraceRecord {
                updates: row[0].parse().map_err(|_| bad(format!("invalid count {:?}", &row[0])))?,
                seconds: parse(1)?,
                elbo: parse(2)?,
                perplexity: if row[3].is_empty() { None } else { Some(parse(3)?) },
            })
        })())
    }
}

pub fn read_trace_from<R: BufRead>(input: R) -> Result<RunTrace, TraceError> {
    let mut reader = TraceReader::new(input)?;
    let records = reader.by_ref().collect::<Result<_, _>>()?;
    Ok(RunTrace { meta: reader.meta, records })
}

pub fn read_trace(path: &Path) -> Result<RunTrace, TraceError> {
    read_trace_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunTrace {
        RunTrace {
            meta: vec![("algo".into(), "esvi".into()), ("topics".into(), "8".into())],
            records: vec![
                TraceRecord { updates: 0, seconds: 0.0, elbo: -1.0 / 3.0, perplexity: None },
                TraceRecord { updates: 17, seconds: 0.1, elbo: -0.1 - 0.2, perplexity: Some(std::f64::consts::PI) },
            ],
        }
    }

    fn bytes(t: &RunTrace) -> Vec<u8> {
        let mut buf = Vec::new();
        write_trace_to(t, &mut buf).unwrap();
        buf
    }

    #[test]
    fn empty_trace_is_header_only() {
        let text = String::from_utf8(bytes(&RunTrace::default())).unwrap();
        assert_eq!(text, "# \nupdates,seconds,elbo,perplexity\n");
        assert_eq!(read_trace_from(text.as_bytes()).unwrap(), RunTrace::default());
    }

    #[test]
    fn roundtrip_is_exact() {
        let t = sample();
        let back = read_trace_from(bytes(&t).as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.meta("topics"), Some("8"));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_trace_from("updates,seconds,elbo,perplexity\n".as_bytes()).is_err());
        assert!(read_trace_from("# a=1\nupdates,elbo\n".as_bytes()).is_err());
        let err = read_trace_from("# a=1\nupdates,seconds,elbo,perplexity\n1,x,2,\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn push_keeps_order() {
        let mut t = sample();
        let bad = TraceRecord { updates: 3, seconds: 1.0, elbo: 0.0, perplexity: None };
        assert!(t.push(bad).is_err());
    }
}
