//! Trace files: CSV with header `timestamp_utc,frequency_hz`, one row per sample.
//!
//! Timestamps are RFC 3339 (`2021-01-08T00:00:00Z`), `YYYY-MM-DD HH:MM:SS`
//! in UTC, or integer Unix seconds. The sample interval is taken from the
//! first two rows and must then hold exactly.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use thiserror::Error;

use crate::domain::{FrequencyTrace, F_MAX_VALID, F_MIN_VALID};

pub const TRACE_HEADER: [&str; 2] = ["timestamp_utc", "frequency_hz"];

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("line {line}: expected timestamp {expected}, got {got} (gap or irregular spacing)")]
    Gap { line: u64, expected: i64, got: i64 },
    #[error("line {line}: timestamp {got} does not increase")]
    NonMonotonic { line: u64, got: i64 },
    #[error("line {line}: {value} Hz is outside [{F_MIN_VALID}, {F_MAX_VALID}] Hz")]
    Range { line: u64, value: f64 },
    #[error("trace has {0} samples, at least 2 needed")]
    TooShort(usize),
}

fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(t) = s.parse::<i64>() {
        return Some(t);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").ok().map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(t: i64) -> String {
    match Utc.timestamp_opt(t, 0).single() {
        Some(d) => d.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => t.to_string(),
    }
}

pub fn read_trace<R: Read>(reader: R) -> Result<FrequencyTrace, TraceIoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| TraceIoError::Parse { line: 1, msg: e.to_string() })?;
    if header.len() != 2 || header.get(0) != Some(TRACE_HEADER[0]) || header.get(1) != Some(TRACE_HEADER[1]) {
        return Err(TraceIoError::Parse { line: 1, msg: format!("header must be {}", TRACE_HEADER.join(",")) });
    }

    let mut t0 = 0i64;
    let mut prev = 0i64;
    let mut dt = 0i64;
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| TraceIoError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(TraceIoError::Parse { line, msg: format!("expected 2 fields, got {}", rec.len()) });
        }
        let t = parse_timestamp(&rec[0])
            .ok_or_else(|| TraceIoError::Parse { line, msg: format!("bad timestamp {:?}", &rec[0]) })?;
        let f: f64 = rec[1]
            .parse()
            .map_err(|_| TraceIoError::Parse { line, msg: format!("bad frequency {:?}", &rec[1]) })?;
        if !(F_MIN_VALID..=F_MAX_VALID).contains(&f) {
            return Err(TraceIoError::Range { line, value: f });
        }
        match samples.len() {
            0 => t0 = t,
            _ if t <= prev => return Err(TraceIoError::NonMonotonic { line, got: t }),
            1 => dt = t - prev,
            _ if t - prev != dt => return Err(TraceIoError::Gap { line, expected: prev + dt, got: t }),
            _ => {}
        }
        prev = t;
        samples.push(f);
    }
    if samples.len() < 2 {
        return Err(TraceIoError::TooShort(samples.len()));
    }
    FrequencyTrace::new(t0, dt as f64, samples).map_err(|e| TraceIoError::Parse { line: 0, msg: e.to_string() })
}

pub fn ingest_trace(path: &Path) -> Result<FrequencyTrace, TraceIoError> {
    read_trace(std::fs::File::open(path)?)
}

pub fn write_trace<W: Write>(trace: &FrequencyTrace, writer: W) -> Result<(), TraceIoError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| TraceIoError::Io(e.into());
    w.write_record(TRACE_HEADER).map_err(io)?;
    let dt = trace.dt().round() as i64;
    for (i, f) in trace.samples().iter().enumerate() {
        w.write_record([format_timestamp(trace.t0() + i as i64 * dt), format!("{f:.6}")]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trace(trace: &FrequencyTrace, path: &Path) -> Result<(), TraceIoError> {
    write_trace(trace, std::io::BufWriter::new(std::fs::File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_of(rows: &[(&str, &str)]) -> String {
        let mut s = "timestamp_utc,frequency_hz\n".to_string();
        for (t, f) in rows {
            s.push_str(&format!("{t},{f}\n"));
        }
        s
    }

    #[test]
    fn reads_rfc3339_and_unix() {
        let s = csv_of(&[("2021-01-08T00:00:00Z", "50.01"), ("2021-01-08T00:00:01Z", "49.99"), ("2021-01-08T00:00:02Z", "50")]);
        let t = read_trace(s.as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.t0(), 1_610_064_000);
        assert_eq!(t.dt(), 1.0);
        let u = read_trace(csv_of(&[("100", "50"), ("101", "50")]).as_bytes()).unwrap();
        assert_eq!(u.t0(), 100);
    }

    #[test]
    fn gap_reports_line() {
        let s = csv_of(&[("0", "50"), ("1", "50"), ("2", "50"), ("4", "50")]);
        match read_trace(s.as_bytes()) {
            Err(TraceIoError::Gap { line, expected, got }) => assert_eq!((line, expected, got), (5, 3, 4)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn range_and_parse_errors() {
        let s = csv_of(&[("0", "50"), ("1", "61.2")]);
        assert!(matches!(read_trace(s.as_bytes()), Err(TraceIoError::Range { line: 3, .. })));
        let s = csv_of(&[("0", "50"), ("x", "50")]);
        assert!(matches!(read_trace(s.as_bytes()), Err(TraceIoError::Parse { line: 3, .. })));
        let s = csv_of(&[("1", "50"), ("1", "50")]);
        assert!(matches!(read_trace(s.as_bytes()), Err(TraceIoError::NonMonotonic { line: 3, .. })));
        assert!(matches!(read_trace("time,f\n0,50\n".as_bytes()), Err(TraceIoError::Parse { line: 1, .. })));
        assert!(matches!(read_trace(csv_of(&[("0", "50")]).as_bytes()), Err(TraceIoError::TooShort(1))));
    }

    #[test]
    fn round_trip() {
        let t = FrequencyTrace::new(1_610_064_000, 1.0, vec![50.0, 49.987654, 50.012]).unwrap();
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp_utc,frequency_hz\n2021-01-08T00:00:00Z,50.000000\n"));
        assert_eq!(read_trace(buf.as_slice()).unwrap(), t);
    }
}
