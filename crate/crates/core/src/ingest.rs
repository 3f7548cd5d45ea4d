//! Recording and label CSV parsing, score binning and windowing.

use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use thiserror::Error;

use crate::wavelet::{resample_to_pow2, WaveletError};

pub const DEFAULT_RATE: f64 = 50.0;
pub const RECORDING_HEADER: [&str; 4] = ["t", "x", "y", "z"];
pub const LABELS_HEADER: [&str; 7] = [
    "patient_id",
    "start",
    "end",
    "activity",
    "tremor",
    "dyskinesia",
    "bradykinesia",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: cannot parse {field} from `{value}`")]
    Field {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: timestamp {t} does not increase")]
    NonMonotone { line: u64, t: f64 },
    #[error("recording has no samples")]
    Empty,
    #[error("line {line}: unknown activity `{value}`")]
    UnknownActivity { line: u64, value: String },
    #[error("line {line}: segment start {start} is not before end {end}")]
    BadSpan { line: u64, start: f64, end: f64 },
    #[error("{field} score {value} out of range")]
    ScoreRange { field: &'static str, value: i64 },
    #[error("invalid window configuration: {0}")]
    Config(String),
    #[error("nominal rate must be positive, got {0}")]
    Rate(f64),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
}

impl IngestError {
    fn at_line(self, line: u64) -> Self {
        match self {
            IngestError::ScoreRange { field, value } => IngestError::Csv {
                line,
                message: format!("{field} score {value} out of range"),
            },
            other => other,
        }
    }
}

/// The five activity groups a task segment can belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Activity {
    Resting,
    GrossUpperLimb,
    FineUpperLimb,
    PeriodicHand,
    Walking,
}

impl Activity {
    pub const ALL: [Activity; 5] = [
        Activity::Resting,
        Activity::GrossUpperLimb,
        Activity::FineUpperLimb,
        Activity::PeriodicHand,
        Activity::Walking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activity::Resting => "Resting",
            Activity::GrossUpperLimb => "GrossUpperLimb",
            Activity::FineUpperLimb => "FineUpperLimb",
            Activity::PeriodicHand => "PeriodicHand",
            Activity::Walking => "Walking",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activity::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub patient_id: String,
    pub samples: Vec<Sample>,
    pub nominal_rate: f64,
}

impl Recording {
    pub fn new(
        patient_id: impl Into<String>,
        samples: Vec<Sample>,
        nominal_rate: f64,
    ) -> Result<Self, IngestError> {
        if samples.is_empty() {
            return Err(IngestError::Empty);
        }
        if !(nominal_rate > 0.0) {
            return Err(IngestError::Rate(nominal_rate));
        }
        if let Some(i) = samples.windows(2).position(|w| !(w[1].t > w[0].t)) {
            // +2: header line plus 1-based numbering of the second sample.
            return Err(IngestError::NonMonotone {
                line: i as u64 + 3,
                t: samples[i + 1].t,
            });
        }
        Ok(Self {
            patient_id: patient_id.into(),
            samples,
            nominal_rate,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t) - self.samples[0].t
    }
}

/// Clinician scores after binning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SymptomLabels {
    /// 0..=2
    pub tremor: u8,
    /// 0..=1
    pub dyskinesia: u8,
    /// 0..=1
    pub bradykinesia: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSegment {
    pub patient_id: String,
    pub start: f64,
    pub end: f64,
    pub activity: Activity,
    pub labels: SymptomLabels,
}

impl TaskSegment {
    pub fn contains(&self, start: f64, end: f64) -> bool {
        start >= self.start - SPAN_EPS && end <= self.end + SPAN_EPS
    }
}

/// A resampled analysis window with the labels of its task segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub patient_id: String,
    pub activity: Activity,
    pub labels: SymptomLabels,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn axes(&self) -> [&[f64]; 3] {
        [&self.x, &self.y, &self.z]
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub window_seconds: f64,
    pub overlap: f64,
    /// Allowed relative deviation of the in-window sample count from nominal.
    pub rate_tolerance: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_seconds: 10.0,
            overlap: 0.5,
            rate_tolerance: 0.05,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.window_seconds > 0.0) || !self.window_seconds.is_finite() {
            return Err(IngestError::Config(format!(
                "window length must be positive, got {}",
                self.window_seconds
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(IngestError::Config(format!(
                "overlap must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.window_seconds * (1.0 - self.overlap)
    }
}

const SPAN_EPS: f64 = 1e-9;

/// Maps a raw 0..=4 clinician score onto the 0..=2 model bins.
pub fn bin_score(raw: i64) -> Result<u8, IngestError> {
    match raw {
        0 => Ok(0),
        1 => Ok(1),
        2..=4 => Ok(2),
        _ => Err(IngestError::ScoreRange {
            field: "tremor",
            value: raw,
        }),
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), IngestError> {
    let headers = rdr.headers().map_err(|e| IngestError::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(IngestError::Header {
            expected: expected.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &'static str) -> Result<T, IngestError> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse().map_err(|_| IngestError::Field {
        line: record_line(rec),
        field: name,
        value: raw.to_string(),
    })
}

fn next_record<R: Read>(
    rdr: &mut csv::Reader<R>,
    rec: &mut csv::StringRecord,
) -> Result<bool, IngestError> {
    rdr.read_record(rec).map_err(|e| IngestError::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    })
}

/// Reads a `t,x,y,z` recording from any reader.
pub fn read_recording<R: Read>(reader: R, patient_id: &str) -> Result<Recording, IngestError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &RECORDING_HEADER)?;
    let mut samples = Vec::new();
    let mut rec = csv::StringRecord::new();
    while next_record(&mut rdr, &mut rec)? {
        let sample = Sample {
            t: field(&rec, 0, "t")?,
            x: field(&rec, 1, "x")?,
            y: field(&rec, 2, "y")?,
            z: field(&rec, 3, "z")?,
        };
        if let Some(prev) = samples.last() {
            let prev: &Sample = prev;
            if !(sample.t > prev.t) {
                return Err(IngestError::NonMonotone {
                    line: record_line(&rec),
                    t: sample.t,
                });
            }
        }
        if ![sample.t, sample.x, sample.y, sample.z].iter().all(|v| v.is_finite()) {
            return Err(IngestError::Csv {
                line: record_line(&rec),
                message: "non-finite value".into(),
            });
        }
        samples.push(sample);
    }
    Recording::new(patient_id, samples, DEFAULT_RATE)
}

pub fn parse_recording(path: &Path, patient_id: &str) -> Result<Recording, IngestError> {
    read_recording(open(path)?, patient_id)
}

fn score(rec: &csv::StringRecord, idx: usize, name: &'static str, max: i64) -> Result<i64, IngestError> {
    let value: i64 = field(rec, idx, name)?;
    if !(0..=max).contains(&value) {
        return Err(IngestError::ScoreRange { field: name, value }.at_line(record_line(rec)));
    }
    Ok(value)
}

/// Reads task segments. Tremor scores are raw 0..=4 and get binned;
/// dyskinesia and bradykinesia are binary.
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<TaskSegment>, IngestError> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, &LABELS_HEADER)?;
    let mut segments = Vec::new();
    let mut rec = csv::StringRecord::new();
    while next_record(&mut rdr, &mut rec)? {
        let line = record_line(&rec);
        let patient_id = rec.get(0).unwrap_or("").to_string();
        if patient_id.is_empty() {
            return Err(IngestError::Field {
                line,
                field: "patient_id",
                value: String::new(),
            });
        }
        let start: f64 = field(&rec, 1, "start")?;
        let end: f64 = field(&rec, 2, "end")?;
        if !(start < end) {
            return Err(IngestError::BadSpan { line, start, end });
        }
        let activity_raw = rec.get(3).unwrap_or("");
        let activity = activity_raw
            .parse::<Activity>()
            .map_err(|value| IngestError::UnknownActivity { line, value })?;
        let tremor = bin_score(score(&rec, 4, "tremor", 4)?).map_err(|e| e.at_line(line))?;
        let labels = SymptomLabels {
            tremor,
            dyskinesia: score(&rec, 5, "dyskinesia", 1)? as u8,
            bradykinesia: score(&rec, 6, "bradykinesia", 1)? as u8,
        };
        segments.push(TaskSegment {
            patient_id,
            start,
            end,
            activity,
            labels,
        });
    }
    Ok(segments)
}

pub fn parse_labels(path: &Path) -> Result<Vec<TaskSegment>, IngestError> {
    read_labels(open(path)?)
}

/// Number of window start offsets that fit in a span of `duration` seconds.
pub fn window_count(duration: f64, cfg: &WindowConfig) -> usize {
    if duration + SPAN_EPS < cfg.window_seconds {
        return 0;
    }
    ((duration - cfg.window_seconds) / cfg.step() + SPAN_EPS).floor() as usize + 1
}

/// Cuts labeled windows out of `rec`.
///
/// Windows advance by `window_seconds * (1 - overlap)` from each segment
/// start and must fit entirely inside one segment of the same patient. A
/// window is dropped (with a warning) when its sample count deviates from
/// nominal by more than the rate tolerance, or when it falls inside more than
/// one segment.
pub fn segment_windows(
    rec: &Recording,
    segments: &[TaskSegment],
    cfg: &WindowConfig,
) -> Result<Vec<Window>, IngestError> {
    cfg.validate()?;
    let own: Vec<&TaskSegment> = segments
        .iter()
        .filter(|s| s.patient_id == rec.patient_id)
        .collect();
    let times: Vec<f64> = rec.samples.iter().map(|s| s.t).collect();
    let expected = cfg.window_seconds * rec.nominal_rate;
    let step = cfg.step();

    let mut windows = Vec::new();
    for seg in &own {
        for m in 0..window_count(seg.end - seg.start, cfg) {
            let start = seg.start + step * m as f64;
            let end = start + cfg.window_seconds;
            if own.iter().filter(|s| s.contains(start, end)).count() > 1 {
                warn!(
                    "{}: window [{start}, {end}) lies in overlapping segments; dropped",
                    rec.patient_id
                );
                continue;
            }
            let lo = times.partition_point(|&t| t < start - SPAN_EPS);
            let hi = times.partition_point(|&t| t < end - SPAN_EPS);
            let count = hi - lo;
            if count == 0 {
                continue;
            }
            if (count as f64 - expected).abs() > cfg.rate_tolerance * expected || count < 4 {
                warn!(
                    "{}: window [{start}, {end}) has {count} samples, expected {expected}; dropped",
                    rec.patient_id
                );
                continue;
            }
            let slice = &rec.samples[lo..hi];
            let t = &times[lo..hi];
            let axis = |f: fn(&Sample) -> f64| -> Result<Vec<f64>, IngestError> {
                let v: Vec<f64> = slice.iter().map(f).collect();
                Ok(resample_to_pow2(&v, t)?)
            };
            windows.push(Window {
                patient_id: rec.patient_id.clone(),
                activity: seg.activity,
                labels: seg.labels,
                x: axis(|s| s.x)?,
                y: axis(|s| s.y)?,
                z: axis(|s| s.z)?,
                start,
                end,
            });
        }
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_recording(seconds: f64, rate: f64) -> Recording {
        let n = (seconds * rate).round() as usize;
        let samples = (0..n)
            .map(|i| Sample {
                t: i as f64 / rate,
                x: 0.0,
                y: 0.0,
                z: 1.0,
            })
            .collect();
        Recording::new("p1", samples, rate).unwrap()
    }

    fn segment(start: f64, end: f64, tremor: u8) -> TaskSegment {
        TaskSegment {
            patient_id: "p1".into(),
            start,
            end,
            activity: Activity::Resting,
            labels: SymptomLabels {
                tremor,
                ..Default::default()
            },
        }
    }

    #[test]
    fn minimal_recording() {
        let rec = read_recording("t,x,y,z\n0.00,0,0,1\n0.02,0,0,1\n".as_bytes(), "a").unwrap();
        assert_eq!(rec.samples.len(), 2);
        assert_eq!(rec.nominal_rate, 50.0);
        assert_eq!(rec.samples[1].t, 0.02);
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let err = read_recording("t,x,y,z\n0.00,0,0,1\n0.02,0,0,1\n0.02,0,0,1\n".as_bytes(), "a")
            .unwrap_err();
        assert!(matches!(err, IngestError::NonMonotone { line: 4, .. }), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = read_recording("t,x,y,z\n0.00,0,0,1\n0.02,zero,0,1\n".as_bytes(), "a").unwrap_err();
        assert!(
            matches!(err, IngestError::Field { line: 3, field: "x", .. }),
            "{err}"
        );
        let err = read_recording("t,x,y\n0,0,0\n".as_bytes(), "a").unwrap_err();
        assert!(matches!(err, IngestError::Header { .. }));
    }

    #[test]
    fn empty_recording_is_error() {
        assert!(matches!(
            read_recording("t,x,y,z\n".as_bytes(), "a"),
            Err(IngestError::Empty)
        ));
    }

    #[test]
    fn bin_score_table() {
        let got: Vec<u8> = (0..=4).map(|r| bin_score(r).unwrap()).collect();
        assert_eq!(got, vec![0, 1, 2, 2, 2]);
        assert!(bin_score(5).is_err());
        assert!(bin_score(-1).is_err());
        // Monotone and onto {0, 1, 2}.
        assert!(got.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*got.last().unwrap(), 2);
    }

    #[test]
    fn labels_parse_and_bin() {
        let text = "patient_id,start,end,activity,tremor,dyskinesia,bradykinesia\n\
                    p1,0,30,Resting,3,1,0\n\
                    p1,30,40,Walking,0,0,0\n";
        let segs = read_labels(text.as_bytes()).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].labels.tremor, 2);
        assert_eq!(segs[0].labels.dyskinesia, 1);
        assert_eq!(segs[1].labels.tremor, 0);
        assert_eq!(segs[1].activity, Activity::Walking);
    }

    #[test]
    fn labels_errors() {
        let head = "patient_id,start,end,activity,tremor,dyskinesia,bradykinesia\n";
        let bad_activity = format!("{head}p1,0,30,Jogging,0,0,0\n");
        assert!(matches!(
            read_labels(bad_activity.as_bytes()),
            Err(IngestError::UnknownActivity { line: 2, .. })
        ));
        let lower = format!("{head}p1,0,30,resting,0,0,0\n");
        assert!(read_labels(lower.as_bytes()).is_err());
        let span = format!("{head}p1,30,30,Resting,0,0,0\n");
        assert!(matches!(
            read_labels(span.as_bytes()),
            Err(IngestError::BadSpan { .. })
        ));
        let range = format!("{head}p1,0,30,Resting,5,0,0\n");
        assert!(read_labels(range.as_bytes()).is_err());
        let range = format!("{head}p1,0,30,Resting,0,2,0\n");
        assert!(read_labels(range.as_bytes()).is_err());
    }

    #[test]
    fn thirty_second_segment_gives_five_windows() {
        let rec = constant_recording(40.0, 50.0);
        let windows = segment_windows(&rec, &[segment(0.0, 30.0, 1)], &WindowConfig::default()).unwrap();
        let starts: Vec<f64> = windows.iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        for w in &windows {
            assert_eq!(w.len(), 512);
            assert_eq!(w.labels.tremor, 1);
            assert!(w.end <= 30.0);
        }
    }

    #[test]
    fn exact_window_segment() {
        let rec = constant_recording(20.0, 50.0);
        let windows = segment_windows(&rec, &[segment(3.0, 13.0, 0)], &WindowConfig::default()).unwrap();
        assert_eq!(windows.len(), 1);
    }

    #[test]
    fn short_recording_gives_no_windows() {
        let rec = constant_recording(4.0, 50.0);
        let windows = segment_windows(&rec, &[segment(0.0, 30.0, 0)], &WindowConfig::default()).unwrap();
        assert!(windows.is_empty());
    }

    #[test]
    fn sparse_windows_dropped() {
        // Every other sample missing in the second half.
        let samples: Vec<Sample> = (0..2000)
            .filter(|i| *i < 1000 || i % 2 == 0)
            .map(|i| Sample {
                t: i as f64 / 50.0,
                x: 0.0,
                y: 0.0,
                z: 1.0,
            })
            .collect();
        let rec = Recording::new("p1", samples, 50.0).unwrap();
        let windows = segment_windows(&rec, &[segment(0.0, 40.0, 0)], &WindowConfig::default()).unwrap();
        let starts: Vec<f64> = windows.iter().map(|w| w.start).collect();
        assert_eq!(starts, vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn other_patients_and_boundaries_ignored() {
        let rec = constant_recording(60.0, 50.0);
        let mut other = segment(0.0, 60.0, 2);
        other.patient_id = "p2".into();
        let segs = [segment(0.0, 12.0, 0), segment(12.0, 27.0, 1), other];
        let windows = segment_windows(&rec, &segs, &WindowConfig::default()).unwrap();
        let spans: Vec<(f64, f64)> = windows.iter().map(|w| (w.start, w.end)).collect();
        assert_eq!(spans, vec![(0.0, 10.0), (12.0, 22.0), (17.0, 27.0)]);
    }

    #[test]
    fn bad_config_rejected() {
        let rec = constant_recording(20.0, 50.0);
        let cfg = WindowConfig {
            overlap: 1.0,
            ..Default::default()
        };
        assert!(segment_windows(&rec, &[], &cfg).is_err());
    }

    #[test]
    fn window_count_formula() {
        let cfg = WindowConfig::default();
        for (d, n) in [(9.99, 0), (10.0, 1), (14.9, 1), (15.0, 2), (30.0, 5), (600.0, 119)] {
            assert_eq!(window_count(d, &cfg), n, "duration {d}");
        }
    }
}
