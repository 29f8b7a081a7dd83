//! Ground-motion ingestion: AT2/CSV parsing, resampling, padding and
//! assembly of the suite matrix.
//!
//! All accelerations are stored in g. Conversion to m/s² happens only in
//! the integrator and the intensity measures.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binio;
use crate::linalg::Matrix;

/// Default time step of the suite grid (50 Hz).
pub const DEFAULT_DT: f64 = 0.02;
/// Default common duration. 89.98 s at 0.02 s gives exactly 4500 samples.
pub const DEFAULT_DURATION: f64 = 89.98;

pub const SUITE_MAGIC: &[u8; 8] = b"QSUITE01";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed AT2 header: {0}")]
    MalformedHeader(String),
    #[error("sample count mismatch: header declares {expected}, found {found}")]
    SampleCountMismatch { expected: usize, found: usize },
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("unparseable sample {token:?} at index {index}")]
    BadSample { index: usize, token: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("empty record list")]
    EmptySuite,
    #[error("malformed suite file: {0}")]
    MalformedSuite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A uniformly sampled acceleration history in g.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundMotionRecord {
    pub id: String,
    pub dt: f64,
    pub accel: Vec<f64>,
    #[serde(default)]
    pub source_meta: BTreeMap<String, String>,
}

impl GroundMotionRecord {
    /// Validates `dt > 0`, non-empty and finite samples.
    pub fn new(
        id: impl Into<String>,
        dt: f64,
        accel: Vec<f64>,
        source_meta: BTreeMap<String, String>,
    ) -> Result<Self, IngestError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(IngestError::InvalidRecord(format!("dt must be > 0, got {dt}")));
        }
        if accel.is_empty() {
            return Err(IngestError::InvalidRecord("no samples".into()));
        }
        if let Some(index) = accel.iter().position(|v| !v.is_finite()) {
            return Err(IngestError::NonFiniteSample { index });
        }
        Ok(Self {
            id: id.into(),
            dt,
            accel,
            source_meta,
        })
    }

    pub fn len(&self) -> usize {
        self.accel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accel.is_empty()
    }

    /// Time of the final sample.
    pub fn end_time(&self) -> f64 {
        (self.accel.len() - 1) as f64 * self.dt
    }
}

/// Pulls the numeric value following `key` (e.g. `NPTS= 3,`) out of a header line.
fn header_value(line: &str, key: &str) -> Option<String> {
    let upper = line.to_ascii_uppercase();
    let start = upper.find(key)? + key.len();
    let rest = &line[start..];
    let rest = rest.trim_start_matches(|c: char| c.is_whitespace() || c == '=' || c == ':');
    let token: String = rest
        .chars()
        .take_while(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
        .collect();
    (!token.is_empty()).then_some(token)
}

fn parse_npts_dt(line: &str) -> Result<(usize, f64), IngestError> {
    let bad = || IngestError::MalformedHeader(line.trim().to_string());
    if let (Some(n), Some(d)) = (header_value(line, "NPTS"), header_value(line, "DT")) {
        let n = n.parse::<usize>().map_err(|_| bad())?;
        let d = d.parse::<f64>().map_err(|_| bad())?;
        return Ok((n, d));
    }
    // older layout: "  7990    0.0050    NPTS, DT"
    let mut toks = line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty());
    let n = toks.next().and_then(|t| t.parse::<usize>().ok()).ok_or_else(bad)?;
    let d = toks.next().and_then(|t| t.parse::<f64>().ok()).ok_or_else(bad)?;
    Ok((n, d))
}

fn parse_sample(token: &str, index: usize) -> Result<f64, IngestError> {
    let v = token
        .parse::<f64>()
        .or_else(|_| token.replace(['D', 'd'], "E").parse::<f64>())
        .map_err(|_| IngestError::BadSample {
            index,
            token: token.to_string(),
        })?;
    if !v.is_finite() {
        return Err(IngestError::NonFiniteSample { index });
    }
    Ok(v)
}

/// Parses a PEER NGA AT2 file: four header lines with NPTS and DT on the
/// fourth, then whitespace-separated accelerations in g.
pub fn parse_at2(id: &str, text: &str) -> Result<GroundMotionRecord, IngestError> {
    let mut lines = text.lines();
    let mut header = Vec::with_capacity(4);
    for _ in 0..4 {
        header.push(
            lines
                .next()
                .ok_or_else(|| IngestError::MalformedHeader("fewer than 4 header lines".into()))?,
        );
    }
    let (npts, dt) = parse_npts_dt(header[3])?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IngestError::MalformedHeader(format!("DT must be positive: {}", header[3].trim())));
    }

    let mut accel = Vec::with_capacity(npts);
    for tok in lines.flat_map(str::split_whitespace) {
        accel.push(parse_sample(tok, accel.len())?);
    }
    if accel.len() != npts {
        return Err(IngestError::SampleCountMismatch {
            expected: npts,
            found: accel.len(),
        });
    }

    let mut meta = BTreeMap::new();
    meta.insert("header1".to_string(), header[0].trim().to_string());
    meta.insert("header2".to_string(), header[1].trim().to_string());
    meta.insert("header3".to_string(), header[2].trim().to_string());
    meta.insert("format".to_string(), "AT2".to_string());
    GroundMotionRecord::new(id, dt, accel, meta)
}

/// Writes a record in AT2 layout (five values per line).
pub fn write_at2<W: Write>(record: &GroundMotionRecord, mut w: W) -> std::io::Result<()> {
    let line = |k: &str, default: &str| {
        record
            .source_meta
            .get(k)
            .cloned()
            .unwrap_or_else(|| default.to_string())
    };
    writeln!(w, "{}", line("header1", "PEER NGA STRONG MOTION DATABASE RECORD"))?;
    writeln!(w, "{}", line("header2", &record.id))?;
    writeln!(w, "{}", line("header3", "ACCELERATION TIME SERIES IN UNITS OF G"))?;
    writeln!(w, "NPTS= {}, DT= {} SEC", record.accel.len(), record.dt)?;
    for chunk in record.accel.chunks(5) {
        let row: Vec<String> = chunk.iter().map(|v| format!("{v:.10E}")).collect();
        writeln!(w, "  {}", row.join("  "))?;
    }
    Ok(())
}

/// Parses the two-column `time,accel_g` CSV fallback (one header line).
pub fn parse_csv(id: &str, text: &str) -> Result<GroundMotionRecord, IngestError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    lines
        .next()
        .ok_or_else(|| IngestError::MalformedCsv("missing header".into()))?;
    let mut times = Vec::new();
    let mut accel = Vec::new();
    for (row, line) in lines.enumerate() {
        let mut cols = line.split(',').map(str::trim);
        let (t, a) = match (cols.next(), cols.next(), cols.next()) {
            (Some(t), Some(a), None) => (t, a),
            _ => return Err(IngestError::MalformedCsv(format!("row {row}: expected 2 columns"))),
        };
        let t: f64 = t
            .parse()
            .map_err(|_| IngestError::MalformedCsv(format!("row {row}: bad time {t:?}")))?;
        times.push(t);
        accel.push(parse_sample(a, row)?);
    }
    if accel.len() < 2 {
        return Err(IngestError::MalformedCsv("need at least two rows to infer dt".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs().max(1e-12) {
            return Err(IngestError::MalformedCsv(format!("non-uniform time step at row {}", i + 1)));
        }
    }
    let mut meta = BTreeMap::new();
    meta.insert("format".to_string(), "CSV".to_string());
    GroundMotionRecord::new(id, dt, accel, meta)
}

/// Linear interpolation onto `{0, dt_target, …}` up to the original final time.
///
/// When the final time is not a multiple of `dt_target` the grid stops at the
/// last grid point before it.
pub fn resample(record: &GroundMotionRecord, dt_target: f64) -> Result<GroundMotionRecord, IngestError> {
    if !(dt_target > 0.0 && dt_target.is_finite()) {
        return Err(IngestError::InvalidRecord(format!("dt_target must be > 0, got {dt_target}")));
    }
    if dt_target == record.dt {
        return Ok(record.clone());
    }
    let n = record.accel.len();
    let t_end = record.end_time();
    let ratio = t_end / dt_target;
    let steps = if (ratio - ratio.round()).abs() <= 1e-9 * ratio.max(1.0) {
        ratio.round() as usize
    } else {
        ratio.floor() as usize
    };
    let last_exact = (steps as f64 * dt_target - t_end).abs() <= 1e-9 * t_end.max(dt_target);

    let src = &record.accel;
    let mut out = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        if i == steps && last_exact {
            out.push(src[n - 1]);
            continue;
        }
        let s = i as f64 * dt_target / record.dt;
        let k = s.floor() as usize;
        if k >= n - 1 {
            out.push(src[n - 1]);
        } else {
            let frac = s - k as f64;
            out.push(src[k] + frac * (src[k + 1] - src[k]));
        }
    }
    GroundMotionRecord::new(record.id.clone(), dt_target, out, record.source_meta.clone())
}

/// What `pad_or_truncate` did to the record length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LengthAdjustment {
    Unchanged,
    Padded(usize),
    Truncated(usize),
}

/// Zero-pads at the end, or truncates with a logged warning.
pub fn pad_or_truncate(record: &GroundMotionRecord, n_steps: usize) -> (GroundMotionRecord, LengthAdjustment) {
    assert!(n_steps >= 1, "n_steps must be at least 1");
    let mut out = record.clone();
    let len = record.accel.len();
    let adj = match len.cmp(&n_steps) {
        std::cmp::Ordering::Equal => LengthAdjustment::Unchanged,
        std::cmp::Ordering::Less => {
            out.accel.resize(n_steps, 0.0);
            LengthAdjustment::Padded(n_steps - len)
        }
        std::cmp::Ordering::Greater => {
            log::warn!(
                "record {} truncated from {} to {} samples ({:.3} s dropped)",
                record.id,
                len,
                n_steps,
                (len - n_steps) as f64 * record.dt
            );
            out.accel.truncate(n_steps);
            LengthAdjustment::Truncated(len - n_steps)
        }
    };
    (out, adj)
}

/// Number of samples for a common duration: `round(duration / dt) + 1`.
pub fn steps_for_duration(dt: f64, duration: f64) -> usize {
    (duration / dt).round() as usize + 1
}

/// Resamples and pads/truncates a record onto a `(dt, n_steps)` grid.
pub fn to_grid(record: &GroundMotionRecord, dt: f64, n_steps: usize) -> Result<GroundMotionRecord, IngestError> {
    let r = resample(record, dt)?;
    Ok(pad_or_truncate(&r, n_steps).0)
}

/// Records on a shared grid, one per column.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteMatrix {
    pub dt: f64,
    pub n_steps: usize,
    pub records: Vec<String>,
    pub source_meta: Vec<BTreeMap<String, String>>,
    pub data: Matrix,
}

/// JSON manifest written next to a binary suite file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteManifest {
    pub records: Vec<String>,
    pub dt: f64,
    pub n_steps: usize,
    pub source_meta: Vec<BTreeMap<String, String>>,
}

impl SuiteMatrix {
    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    /// Column `j` as a record on the suite grid.
    pub fn record(&self, j: usize) -> GroundMotionRecord {
        GroundMotionRecord {
            id: self.records[j].clone(),
            dt: self.dt,
            accel: self.data.column(j).to_vec(),
            source_meta: self.source_meta[j].clone(),
        }
    }

    pub fn manifest(&self) -> SuiteManifest {
        SuiteManifest {
            records: self.records.clone(),
            dt: self.dt,
            n_steps: self.n_steps,
            source_meta: self.source_meta.clone(),
        }
    }

    /// `QSUITE01`, then `n_steps` and `m` as u32 LE, then column-major f64 LE.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(SUITE_MAGIC)?;
        binio::write_u32(&mut w, self.n_steps as u32)?;
        binio::write_u32(&mut w, self.n_records() as u32)?;
        binio::write_f64s(&mut w, self.data.as_col_major())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(16 + 8 * self.data.as_col_major().len());
        self.write_binary(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads the binary matrix and pairs it with its manifest.
    pub fn read_binary<R: Read>(mut r: R, manifest: SuiteManifest) -> Result<Self, IngestError> {
        if !binio::expect_magic(&mut r, SUITE_MAGIC)? {
            return Err(IngestError::MalformedSuite("bad magic".into()));
        }
        let n_steps = binio::read_u32(&mut r)? as usize;
        let m = binio::read_u32(&mut r)? as usize;
        if n_steps != manifest.n_steps || m != manifest.records.len() {
            return Err(IngestError::MalformedSuite(format!(
                "header {n_steps}x{m} disagrees with manifest {}x{}",
                manifest.n_steps,
                manifest.records.len()
            )));
        }
        let data = binio::read_f64s(&mut r, n_steps * m)?;
        let source_meta = if manifest.source_meta.len() == m {
            manifest.source_meta
        } else {
            vec![BTreeMap::new(); m]
        };
        Ok(Self {
            dt: manifest.dt,
            n_steps,
            records: manifest.records,
            source_meta,
            data: Matrix::from_col_major(n_steps, m, data),
        })
    }
}

impl SuiteMatrix {
    /// Writes the binary matrix to `path` and its manifest to `path.json`.
    pub fn save(&self, path: &std::path::Path) -> Result<(), IngestError> {
        std::fs::write(path, self.to_bytes())?;
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&self.manifest())? + "\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, IngestError> {
        let manifest: SuiteManifest = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let bytes = std::fs::read(path)?;
        Self::read_binary(&bytes[..], manifest)
    }
}

/// `path` with `.json` appended.
pub fn sidecar_path(path: &std::path::Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Resamples each record to `dt`, pads/truncates to
/// `round(duration / dt) + 1` samples and stacks them column-wise.
pub fn build_suite(records: &[GroundMotionRecord], dt: f64, duration: f64) -> Result<SuiteMatrix, IngestError> {
    if records.is_empty() {
        return Err(IngestError::EmptySuite);
    }
    if !(duration >= 0.0) {
        return Err(IngestError::InvalidRecord(format!("duration must be >= 0, got {duration}")));
    }
    let n_steps = steps_for_duration(dt, duration);
    let columns = records
        .par_iter()
        .map(|r| to_grid(r, dt, n_steps).map(|g| g.accel))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SuiteMatrix {
        dt,
        n_steps,
        records: records.iter().map(|r| r.id.clone()).collect(),
        source_meta: records.iter().map(|r| r.source_meta.clone()).collect(),
        data: Matrix::from_columns(&columns),
    })
}

/// Reads a record file, dispatching on extension (`.csv` → CSV, anything else → AT2).
pub fn read_record_file(path: &std::path::Path) -> Result<GroundMotionRecord, IngestError> {
    let text = std::fs::read_to_string(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "record".to_string());
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_csv(&id, &text)
    } else {
        parse_at2(&id, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(dt: f64, accel: Vec<f64>) -> GroundMotionRecord {
        GroundMotionRecord::new("t", dt, accel, BTreeMap::new()).unwrap()
    }

    const TINY_AT2: &str = "PEER NGA STRONG MOTION DATABASE RECORD\n\
        TEST EVENT, STATION, 000\n\
        ACCELERATION TIME SERIES IN UNITS OF G\n\
        NPTS= 3, DT= .02 SEC\n\
        0.0 0.1 0.0\n";

    #[test]
    fn parses_minimal_at2() {
        let r = parse_at2("x", TINY_AT2).unwrap();
        assert_eq!(r.dt, 0.02);
        assert_eq!(r.accel, vec![0.0, 0.1, 0.0]);
        assert_eq!(r.source_meta["header2"], "TEST EVENT, STATION, 000");
    }

    #[test]
    fn parses_legacy_header_and_fortran_exponents() {
        let text = "a\nb\nc\n    4    0.0100    NPTS, DT\n .1D-01 -.2E-01\n 0.0 1.5\n";
        let r = parse_at2("x", text).unwrap();
        assert_eq!(r.dt, 0.01);
        assert_eq!(r.accel, vec![0.01, -0.02, 0.0, 1.5]);
    }

    #[test]
    fn count_mismatch_is_reported() {
        let text = TINY_AT2.replace("NPTS= 3", "NPTS= 4");
        match parse_at2("x", &text) {
            Err(IngestError::SampleCountMismatch { expected: 4, found: 3 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_header_and_nonfinite() {
        let text = TINY_AT2.replace("NPTS= 3, DT= .02 SEC", "garbage line");
        assert!(matches!(parse_at2("x", &text), Err(IngestError::MalformedHeader(_))));
        let text = TINY_AT2.replace("0.1", "NaN");
        assert!(matches!(parse_at2("x", &text), Err(IngestError::NonFiniteSample { index: 1 })));
        assert!(matches!(parse_at2("x", "only\ntwo"), Err(IngestError::MalformedHeader(_))));
    }

    #[test]
    fn at2_writer_roundtrips() {
        let r = rec(0.005, vec![0.1, -0.25, 3.5e-4, 0.0, 1.0, -1.0e-7]);
        let mut buf = Vec::new();
        write_at2(&r, &mut buf).unwrap();
        let back = parse_at2("t", std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.dt, r.dt);
        for (a, b) in back.accel.iter().zip(&r.accel) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn csv_fallback() {
        let r = parse_csv("c", "time,accel_g\n0.0,0.0\n0.01,0.5\n0.02,-0.5\n").unwrap();
        assert!((r.dt - 0.01).abs() < 1e-15);
        assert_eq!(r.accel, vec![0.0, 0.5, -0.5]);
        assert!(parse_csv("c", "time,accel_g\n0.0,0.0\n0.01,0.5\n0.05,1\n").is_err());
    }

    #[test]
    fn resample_midpoint_and_identity() {
        let r = rec(0.02, vec![0.0, 1.0]);
        assert_eq!(resample(&r, 0.01).unwrap().accel, vec![0.0, 0.5, 1.0]);
        assert_eq!(resample(&r, 0.02).unwrap(), r);
    }

    #[test]
    fn resample_is_exact_for_a_ramp() {
        let r = rec(0.03, (0..=100).map(|k| k as f64 * 0.03).collect());
        let out = resample(&r, 0.02).unwrap();
        assert_eq!(out.accel.len(), 151);
        for (i, v) in out.accel.iter().enumerate() {
            let t = i as f64 * 0.02;
            assert!((v - t).abs() <= 1e-12 * t.max(1.0), "i={i} v={v} t={t}");
        }
        assert_eq!(*out.accel.last().unwrap(), *r.accel.last().unwrap());
    }

    #[test]
    fn pad_and_truncate() {
        let (p, adj) = pad_or_truncate(&rec(0.02, vec![1.0, 2.0]), 4);
        assert_eq!(p.accel, vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(adj, LengthAdjustment::Padded(2));
        let (t, adj) = pad_or_truncate(&rec(0.02, vec![1.0, 2.0, 3.0]), 2);
        assert_eq!(t.accel, vec![1.0, 2.0]);
        assert_eq!(adj, LengthAdjustment::Truncated(1));
        let same = rec(0.02, vec![1.0, 2.0, 3.0]);
        assert_eq!(pad_or_truncate(&same, 3), (same.clone(), LengthAdjustment::Unchanged));
    }

    #[test]
    fn suite_dimensions() {
        let r = rec(0.02, (0..10).map(|k| k as f64).collect());
        let s = build_suite(std::slice::from_ref(&r), 0.02, 0.18).unwrap();
        assert_eq!((s.data.rows(), s.data.cols()), (10, 1));
        assert_eq!(s.data.column(0), r.accel.as_slice());

        let s = build_suite(&[r.clone(), r.clone()], 0.02, 0.18).unwrap();
        assert_eq!(s.data.column(0), s.data.column(1));

        assert_eq!(steps_for_duration(DEFAULT_DT, DEFAULT_DURATION), 4500);
        assert!(matches!(build_suite(&[], 0.02, 1.0), Err(IngestError::EmptySuite)));
    }

    #[test]
    fn suite_binary_header_layout() {
        let r = rec(0.02, vec![1.0, 2.0, 3.0]);
        let s = build_suite(&[r], 0.02, 0.04).unwrap();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..8], b"QSUITE01");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 16 + 3 * 8);
        let back = SuiteMatrix::read_binary(bytes.as_slice(), s.manifest()).unwrap();
        assert_eq!(back, s);
    }
}
