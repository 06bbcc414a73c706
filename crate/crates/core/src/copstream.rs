//! Force-plate ingestion.
//!
//! A recording is one CSV file holding rows from every plate in the row
//! (`t,plate_id,fz,cop_x,cop_y`, local plate coordinates). A sidecar layout
//! file places each plate's origin in the global frame. Frames taken at the
//! same instant are fused into a single global CoP as a force-weighted
//! centroid, and the fused stream is resampled to the engine's uniform tick
//! grid.
//!
//! Axis convention: `+x` is anterior (walking direction), `+y` is rightward.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default total vertical force below which the CoP is undefined.
pub const DEFAULT_CONTACT_THRESHOLD_N: f64 = 20.0;
/// Default engine timebase.
pub const DEFAULT_RATE_HZ: f64 = 100.0;
/// Default longest invalid stretch that is still bridged by interpolation.
pub const DEFAULT_MAX_GAP_S: f64 = 0.1;

// Timestamps closer than this are treated as the same grid instant.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Schema { line: u64, msg: String },
    #[error("line {line}: timestamp {t} goes backwards for plate {plate_id}")]
    NonMonotonic { line: u64, plate_id: u32, t: f64 },
    #[error("no plate frames to fuse")]
    Empty,
    #[error("frames at one instant carry different timestamps ({0} vs {1})")]
    MismatchedTimestamps(f64, f64),
    #[error("need at least two valid samples to resample, got {0}")]
    TooFewSamples(usize),
    #[error("timestamps must be strictly increasing (index {0})")]
    NonIncreasing(usize),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

impl IngestError {
    fn schema(line: u64, msg: impl Into<String>) -> Self {
        IngestError::Schema {
            line,
            msg: msg.into(),
        }
    }
}

/// One plate's reading at one instant, with its global origin attached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateFrame {
    pub plate_id: u32,
    pub t: f64,
    pub fz: f64,
    pub cop_local_x: f64,
    pub cop_local_y: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl PlateFrame {
    pub fn global_x(&self) -> f64 {
        self.origin_x + self.cop_local_x
    }

    pub fn global_y(&self) -> f64 {
        self.origin_y + self.cop_local_y
    }
}

/// Timestamped planar CoP point. `valid` is false when the plates saw no
/// contact; `x`/`y` then hold the last valid position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoPSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl CoPSample {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        CoPSample {
            t,
            x,
            y,
            valid: true,
        }
    }

    pub fn invalid(t: f64, x: f64, y: f64) -> Self {
        CoPSample {
            t,
            x,
            y,
            valid: false,
        }
    }
}

/// Global origin of each plate, keyed by plate id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlateLayout {
    origins: BTreeMap<u32, (f64, f64)>,
}

impl PlateLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// `count` plates with ids `1..=count` laid out along +x, `pitch` meters apart.
    pub fn row(count: u32, pitch: f64) -> Self {
        let mut layout = Self::new();
        for i in 0..count {
            layout.insert(i + 1, f64::from(i) * pitch, 0.0);
        }
        layout
    }

    pub fn insert(&mut self, plate_id: u32, origin_x: f64, origin_y: f64) {
        self.origins.insert(plate_id, (origin_x, origin_y));
    }

    pub fn origin(&self, plate_id: u32) -> Option<(f64, f64)> {
        self.origins.get(&plate_id).copied()
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        Self::from_reader(open(path.as_ref())?)
    }

    /// Parses a `plate_id,origin_x,origin_y` CSV.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv_reader(reader);
        check_header(&mut rdr, &["plate_id", "origin_x", "origin_y"])?;
        let mut layout = PlateLayout::new();
        for record in rdr.records() {
            let record = record.map_err(csv_error)?;
            let line = record_line(&record);
            let plate_id = parse_field::<u32>(&record, 0, "plate_id", line)?;
            let origin_x = parse_f64(&record, 1, "origin_x", line)?;
            let origin_y = parse_f64(&record, 2, "origin_y", line)?;
            if layout.origins.contains_key(&plate_id) {
                return Err(IngestError::schema(
                    line,
                    format!("plate {plate_id} listed twice"),
                ));
            }
            layout.insert(plate_id, origin_x, origin_y);
        }
        Ok(layout)
    }
}

/// Reads a plate recording from disk. See [`parse_plate_reader`].
pub fn parse_plate_file(
    path: impl AsRef<Path>,
    layout: &PlateLayout,
) -> Result<Vec<PlateFrame>, IngestError> {
    parse_plate_reader(open(path.as_ref())?, layout)
}

/// Parses a `t,plate_id,fz,cop_x,cop_y` recording. Rows are returned sorted
/// by `(t, plate_id)`. Line numbers in errors count the header as line 1.
pub fn parse_plate_reader<R: Read>(
    reader: R,
    layout: &PlateLayout,
) -> Result<Vec<PlateFrame>, IngestError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &["t", "plate_id", "fz", "cop_x", "cop_y"])?;
    let mut frames = Vec::new();
    let mut last_t: BTreeMap<u32, f64> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        let t = parse_f64(&record, 0, "t", line)?;
        let plate_id = parse_field::<u32>(&record, 1, "plate_id", line)?;
        let fz = parse_f64(&record, 2, "fz", line)?;
        let cop_local_x = parse_f64(&record, 3, "cop_x", line)?;
        let cop_local_y = parse_f64(&record, 4, "cop_y", line)?;
        if fz < 0.0 {
            return Err(IngestError::schema(line, format!("fz {fz} is negative")));
        }
        let (origin_x, origin_y) = layout.origin(plate_id).ok_or_else(|| {
            IngestError::schema(line, format!("plate {plate_id} missing from layout"))
        })?;
        if let Some(&prev) = last_t.get(&plate_id) {
            if t < prev {
                return Err(IngestError::NonMonotonic { line, plate_id, t });
            }
        }
        last_t.insert(plate_id, t);
        frames.push(PlateFrame {
            plate_id,
            t,
            fz,
            cop_local_x,
            cop_local_y,
            origin_x,
            origin_y,
        });
    }
    frames.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.plate_id.cmp(&b.plate_id)));
    Ok(frames)
}

/// Fuses the frames of one instant into a global CoP.
///
/// With total force at or above `contact_threshold` the result is the
/// force-weighted centroid of the plates' global CoPs. Below it the sample is
/// invalid and repeats `previous` (or the origin when there is none).
pub fn fuse_plates(
    frames: &[PlateFrame],
    contact_threshold: f64,
    previous: Option<&CoPSample>,
) -> Result<CoPSample, IngestError> {
    let first = frames.first().ok_or(IngestError::Empty)?;
    let t = first.t;
    if let Some(other) = frames.iter().find(|f| f.t != t) {
        return Err(IngestError::MismatchedTimestamps(t, other.t));
    }
    let total: f64 = frames.iter().map(|f| f.fz).sum();
    if total >= contact_threshold && total > 0.0 {
        let x = frames.iter().map(|f| f.fz * f.global_x()).sum::<f64>() / total;
        let y = frames.iter().map(|f| f.fz * f.global_y()).sum::<f64>() / total;
        Ok(CoPSample::new(t, x, y))
    } else {
        let (x, y) = previous.map_or((0.0, 0.0), |p| (p.x, p.y));
        Ok(CoPSample::invalid(t, x, y))
    }
}

/// Groups sorted frames by timestamp and fuses each group.
pub fn fuse_stream(
    frames: &[PlateFrame],
    contact_threshold: f64,
) -> Result<Vec<CoPSample>, IngestError> {
    let mut out: Vec<CoPSample> = Vec::new();
    for group in frames.chunk_by(|a, b| a.t == b.t) {
        let last_valid = out.iter().rev().find(|s| s.valid);
        let sample = fuse_plates(group, contact_threshold, last_valid)?;
        out.push(sample);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleOptions {
    pub rate: f64,
    /// Invalid stretches longer than this (seconds between the bracketing
    /// valid samples) produce invalid output samples.
    pub max_gap: f64,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        ResampleOptions {
            rate: DEFAULT_RATE_HZ,
            max_gap: DEFAULT_MAX_GAP_S,
        }
    }
}

impl ResampleOptions {
    pub fn at_rate(rate: f64) -> Self {
        ResampleOptions {
            rate,
            ..Self::default()
        }
    }
}

/// Linearly resamples onto the grid `t_first + k / rate` covering
/// `[t_first, t_last]`.
pub fn resample_uniform(
    samples: &[CoPSample],
    opts: ResampleOptions,
) -> Result<Vec<CoPSample>, IngestError> {
    if !(opts.rate > 0.0 && opts.rate.is_finite()) {
        return Err(IngestError::Parameter(format!(
            "rate must be positive, got {}",
            opts.rate
        )));
    }
    if !(opts.max_gap >= 0.0) {
        return Err(IngestError::Parameter(format!(
            "max_gap must be non-negative, got {}",
            opts.max_gap
        )));
    }
    for (i, w) in samples.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(IngestError::NonIncreasing(i + 1));
        }
    }
    let valid: Vec<&CoPSample> = samples.iter().filter(|s| s.valid).collect();
    if valid.len() < 2 {
        return Err(IngestError::TooFewSamples(valid.len()));
    }

    let t_first = samples[0].t;
    let t_last = samples[samples.len() - 1].t;
    let span = t_last - t_first;
    let count = (span * opts.rate + TIME_EPS).floor() as usize + 1;

    let mut out = Vec::with_capacity(count);
    let mut last_valid: Option<(f64, f64)> = None;
    for k in 0..count {
        let t = t_first + k as f64 / opts.rate;
        // first valid sample strictly after t
        let after = valid.partition_point(|s| s.t <= t);
        let exact = after > 0 && valid[after - 1].t == t;
        let point = if exact {
            let s = valid[after - 1];
            Some((s.x, s.y))
        } else if after > 0 && after < valid.len() {
            let (a, b) = (valid[after - 1], valid[after]);
            let gap_ok =
                b.t - a.t <= opts.max_gap + TIME_EPS || !has_invalid_between(samples, a.t, b.t);
            gap_ok.then(|| {
                let frac = (t - a.t) / (b.t - a.t);
                (a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y))
            })
        } else {
            None
        };
        match point {
            Some((x, y)) => {
                last_valid = Some((x, y));
                out.push(CoPSample::new(t, x, y));
            }
            None => {
                // before any valid output, keep what the recording held
                let (x, y) = last_valid.unwrap_or_else(|| {
                    let i = samples.partition_point(|s| s.t <= t).max(1) - 1;
                    (samples[i].x, samples[i].y)
                });
                out.push(CoPSample::invalid(t, x, y));
            }
        }
    }
    Ok(out)
}

fn has_invalid_between(samples: &[CoPSample], t0: f64, t1: f64) -> bool {
    let start = samples.partition_point(|s| s.t <= t0);
    samples[start..]
        .iter()
        .take_while(|s| s.t < t1)
        .any(|s| !s.valid)
}

/// Writes the fused-CoP CSV (`t,x,y,valid`).
pub fn write_cop_csv<W: Write>(writer: W, samples: &[CoPSample]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| IngestError::Io {
        path: "<output>".into(),
        source: e.into(),
    };
    wtr.write_record(["t", "x", "y", "valid"]).map_err(io)?;
    for s in samples {
        wtr.write_record([
            s.t.to_string(),
            s.x.to_string(),
            s.y.to_string(),
            u8::from(s.valid).to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush().map_err(|e| IngestError::Io {
        path: "<output>".into(),
        source: e,
    })
}

pub fn read_cop_file(path: impl AsRef<Path>) -> Result<Vec<CoPSample>, IngestError> {
    read_cop_csv(open(path.as_ref())?)
}

/// Reads the fused-CoP CSV. `valid` accepts `1/0/true/false`.
pub fn read_cop_csv<R: Read>(reader: R) -> Result<Vec<CoPSample>, IngestError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &["t", "x", "y", "valid"])?;
    let mut out: Vec<CoPSample> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        let t = parse_f64(&record, 0, "t", line)?;
        let x = parse_f64(&record, 1, "x", line)?;
        let y = parse_f64(&record, 2, "y", line)?;
        let valid = match record[3].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(IngestError::schema(
                    line,
                    format!("valid: expected 0/1, got {other:?}"),
                ))
            }
        };
        if valid && !(x.is_finite() && y.is_finite()) {
            return Err(IngestError::schema(
                line,
                "valid sample with non-finite CoP",
            ));
        }
        if let Some(prev) = out.last() {
            if !(t > prev.t) {
                return Err(IngestError::schema(
                    line,
                    "timestamps must strictly increase",
                ));
            }
        }
        out.push(CoPSample { t, x, y, valid });
    }
    Ok(out)
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

pub(crate) fn check_header<R: Read>(
    rdr: &mut csv::Reader<R>,
    expected: &[&str],
) -> Result<(), IngestError> {
    let headers = rdr.headers().map_err(csv_error)?;
    if headers.is_empty() {
        return Err(IngestError::schema(1, "missing header"));
    }
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(IngestError::schema(
            1,
            format!(
                "expected header {:?}, got {:?}",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => IngestError::schema(line, format!("expected {expected_len} columns, got {len}")),
        csv::ErrorKind::Utf8 { .. } => IngestError::schema(line, "invalid UTF-8"),
        _ => IngestError::schema(line, e.to_string()),
    }
}

pub(crate) fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    line: u64,
) -> Result<T, IngestError> {
    let raw = record.get(idx).unwrap_or("");
    raw.parse::<T>()
        .map_err(|_| IngestError::schema(line, format!("{name}: cannot parse {raw:?}")))
}

pub(crate) fn parse_f64(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    line: u64,
) -> Result<f64, IngestError> {
    let v: f64 = parse_field(record, idx, name, line)?;
    if v.is_nan() {
        return Err(IngestError::schema(line, format!("{name} is NaN")));
    }
    Ok(v)
}
