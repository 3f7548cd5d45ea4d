//! Synthetic labeled cohorts.
//!
//! Each patient gets a session of task segments separated by short breaks.
//! Every sample is gravity plus white noise plus slow postural sway, with an
//! activity-specific movement component and, depending on the segment
//! labels, symptom components:
//!
//! * rest tremor: a 4-6 Hz sinusoid along a direction concentrated on one or
//!   two axes, amplitude tiered by level;
//! * rest dyskinesia: a random-phase sum of three 1-3 Hz sinusoids;
//! * walking: a ~2 Hz gait signal with harmonics on the patient's dominant
//!   axis, and for walking dyskinesia extra 1-3 Hz energy on the other two;
//! * gross upper-limb movement in the 0.5-3 Hz band, scaled down for
//!   bradykinesia.
//!
//! Every random draw happens regardless of the amplitudes configured, so two
//! specs that differ only in an amplitude produce signals that differ only
//! in that component.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::{Activity, IngestError, Recording, Sample, SymptomLabels, TaskSegment, LABELS_HEADER};
use crate::kv::{fmt_f64, KvDoc, KvError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid cohort spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Cohort parameters. Amplitudes are in g, frequencies in Hz, durations in
/// seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub seed: u64,
    pub sample_rate: f64,
    pub segment_seconds: f64,
    pub break_seconds: f64,
    pub rest_segments: usize,
    pub gross_segments: usize,
    pub fine_segments: usize,
    pub periodic_segments: usize,
    pub walking_segments: usize,
    pub noise_sd: f64,
    pub sway_amplitude: f64,
    pub tremor_prevalence: f64,
    pub tremor_severe_fraction: f64,
    pub tremor_amplitude_1: f64,
    pub tremor_amplitude_2: f64,
    pub tremor_leak: f64,
    pub dyskinesia_prevalence: f64,
    pub dyskinesia_amplitude: f64,
    pub walking_amplitude: f64,
    pub walking_cadence: f64,
    pub walking_dyskinesia_prevalence: f64,
    pub walking_dyskinesia_amplitude: f64,
    pub gross_amplitude: f64,
    pub bradykinesia_prevalence: f64,
    pub bradykinesia_factor: f64,
    pub jitter_sd: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_patients: 10,
            seed: 42,
            sample_rate: 50.0,
            segment_seconds: 30.0,
            break_seconds: 5.0,
            rest_segments: 12,
            gross_segments: 6,
            fine_segments: 2,
            periodic_segments: 2,
            walking_segments: 6,
            noise_sd: 0.01,
            sway_amplitude: 0.07,
            tremor_prevalence: 0.5,
            tremor_severe_fraction: 0.5,
            tremor_amplitude_1: 0.05,
            tremor_amplitude_2: 0.25,
            tremor_leak: 0.25,
            dyskinesia_prevalence: 0.35,
            dyskinesia_amplitude: 0.1,
            walking_amplitude: 0.5,
            walking_cadence: 2.0,
            walking_dyskinesia_prevalence: 0.35,
            walking_dyskinesia_amplitude: 0.15,
            gross_amplitude: 0.3,
            bradykinesia_prevalence: 0.4,
            bradykinesia_factor: 0.35,
            jitter_sd: 0.2,
        }
    }
}

macro_rules! spec_fields {
    ($m:ident) => {
        $m!(
            n_patients,
            seed,
            sample_rate,
            segment_seconds,
            break_seconds,
            rest_segments,
            gross_segments,
            fine_segments,
            periodic_segments,
            walking_segments,
            noise_sd,
            sway_amplitude,
            tremor_prevalence,
            tremor_severe_fraction,
            tremor_amplitude_1,
            tremor_amplitude_2,
            tremor_leak,
            dyskinesia_prevalence,
            dyskinesia_amplitude,
            walking_amplitude,
            walking_cadence,
            walking_dyskinesia_prevalence,
            walking_dyskinesia_amplitude,
            gross_amplitude,
            bradykinesia_prevalence,
            bradykinesia_factor,
            jitter_sd
        )
    };
}

impl CohortSpec {
    pub const KEYS: &'static [&'static str] = {
        macro_rules! names {
            ($($f:ident),*) => { &[$(stringify!($f)),*] };
        }
        spec_fields!(names)
    };

    /// Parses a key-value spec; missing keys keep their defaults.
    pub fn from_kv(doc: &KvDoc) -> Result<Self, SynthError> {
        doc.check_keys(Self::KEYS)?;
        let mut spec = Self::default();
        macro_rules! read {
            ($($f:ident),*) => { $( spec.$f = doc.parse_or(stringify!($f), spec.$f)?; )* };
        }
        spec_fields!(read);
        spec.validate()?;
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self, SynthError> {
        Self::from_kv(&KvDoc::parse(text)?)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut doc = KvDoc::new();
        macro_rules! write {
            ($($f:ident),*) => { $( doc.set(stringify!($f), self.$f); )* };
        }
        spec_fields!(write);
        doc
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: &str| Err(SynthError::Spec(msg.to_string()));
        if self.n_patients < 2 {
            return fail("n_patients must be at least 2");
        }
        if !(self.sample_rate > 0.0) {
            return fail("sample_rate must be positive");
        }
        if !(self.segment_seconds > 0.0) || self.break_seconds < 0.0 {
            return fail("segment durations must be positive");
        }
        for (name, p) in [
            ("tremor_prevalence", self.tremor_prevalence),
            ("tremor_severe_fraction", self.tremor_severe_fraction),
            ("dyskinesia_prevalence", self.dyskinesia_prevalence),
            ("walking_dyskinesia_prevalence", self.walking_dyskinesia_prevalence),
            ("bradykinesia_prevalence", self.bradykinesia_prevalence),
            ("bradykinesia_factor", self.bradykinesia_factor),
            ("tremor_leak", self.tremor_leak),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::Spec(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.tremor_amplitude_2 > self.tremor_amplitude_1 && self.tremor_amplitude_1 > 0.0) {
            return fail("tremor amplitudes must satisfy level 2 > level 1 > 0");
        }
        let nonneg = [
            self.noise_sd,
            self.sway_amplitude,
            self.dyskinesia_amplitude,
            self.walking_amplitude,
            self.walking_dyskinesia_amplitude,
            self.gross_amplitude,
            self.jitter_sd,
        ];
        if nonneg.iter().any(|v| !(*v >= 0.0)) {
            return fail("amplitudes and noise levels must be non-negative");
        }
        if !(self.walking_cadence > 0.0 && self.walking_cadence * 3.0 < self.sample_rate / 2.0) {
            return fail("walking_cadence must be positive and its third harmonic below Nyquist");
        }
        Ok(())
    }

    pub fn patient_id(&self, index: usize) -> String {
        format!("P{:02}", index + 1)
    }
}

/// One synthetic session.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientData {
    pub recording: Recording,
    pub segments: Vec<TaskSegment>,
    /// Raw 0..=4 tremor scores as written to the labels file.
    pub raw_tremor: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
struct Tone {
    freq: f64,
    phase: f64,
}

impl Tone {
    fn at(&self, t: f64) -> f64 {
        (2.0 * PI * self.freq * t + self.phase).sin()
    }
}

fn tones(rng: &mut ChaCha8Rng, count: usize, lo: f64, hi: f64) -> Vec<Tone> {
    (0..count)
        .map(|_| Tone {
            freq: rng.random_range(lo..hi),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect()
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let normal = Normal::<f64>::new(0.0, 1.0).expect("valid");
    loop {
        let v = [normal.sample(rng), normal.sample(rng), normal.sample(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Everything drawn once per patient.
struct PatientTraits {
    gravity: [f64; 3],
    walking_axis: usize,
    cadence: f64,
    tremor_gain: f64,
    dyskinesia_gain: f64,
    walking_gain: f64,
    gross_gain: f64,
}

/// Per-segment signal recipe; evaluated sample by sample.
struct SegmentSignal {
    sway: [Vec<Tone>; 3],
    sway_amp: f64,
    tremor: Option<(Tone, [f64; 3])>,
    dyskinesia: Option<(Vec<Tone>, [f64; 3])>,
    movement: Vec<(Vec<Tone>, [f64; 3])>,
}

impl SegmentSignal {
    fn value(&self, axis: usize, t: f64) -> f64 {
        let mut v = self.sway_amp * self.sway[axis].iter().map(|s| s.at(t)).sum::<f64>();
        if let Some((tone, gains)) = &self.tremor {
            v += gains[axis] * tone.at(t);
        }
        if let Some((ts, gains)) = &self.dyskinesia {
            v += gains[axis] * ts.iter().map(|s| s.at(t)).sum::<f64>();
        }
        for (ts, gains) in &self.movement {
            v += gains[axis] * ts.iter().map(|s| s.at(t)).sum::<f64>();
        }
        v
    }
}

fn sway(rng: &mut ChaCha8Rng) -> [Vec<Tone>; 3] {
    [
        tones(rng, 2, 0.1, 0.5),
        tones(rng, 2, 0.1, 0.5),
        tones(rng, 2, 0.1, 0.5),
    ]
}

fn patient_rng(spec: &CohortSpec, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Generates the recording and task segments of patient `index`.
pub fn generate_patient(spec: &CohortSpec, index: usize) -> Result<PatientData, SynthError> {
    spec.validate()?;
    let mut rng = patient_rng(spec, index);
    let jitter = LogNormal::new(0.0, spec.jitter_sd.max(1e-12)).expect("valid sigma");
    let gain = |rng: &mut ChaCha8Rng| {
        let g = jitter.sample(rng);
        if spec.jitter_sd == 0.0 {
            1.0
        } else {
            g
        }
    };
    let traits = PatientTraits {
        gravity: unit_vector(&mut rng),
        walking_axis: rng.random_range(0..3),
        cadence: spec.walking_cadence * rng.random_range(0.9..1.1),
        tremor_gain: gain(&mut rng),
        dyskinesia_gain: gain(&mut rng),
        walking_gain: gain(&mut rng),
        gross_gain: gain(&mut rng),
    };

    let mut plan: Vec<Activity> = Vec::new();
    for (activity, count) in [
        (Activity::Resting, spec.rest_segments),
        (Activity::GrossUpperLimb, spec.gross_segments),
        (Activity::FineUpperLimb, spec.fine_segments),
        (Activity::PeriodicHand, spec.periodic_segments),
        (Activity::Walking, spec.walking_segments),
    ] {
        plan.extend(std::iter::repeat_n(activity, count));
    }
    plan.shuffle(&mut rng);

    let patient_id = spec.patient_id(index);
    let rate = spec.sample_rate;
    let mut segments = Vec::with_capacity(plan.len());
    let mut raw_tremor = Vec::with_capacity(plan.len());
    let mut signals = Vec::with_capacity(plan.len());
    let mut cursor = spec.break_seconds;
    for activity in plan {
        let (labels, raw, signal) = segment_signal(spec, &traits, activity, &mut rng);
        segments.push(TaskSegment {
            patient_id: patient_id.clone(),
            start: cursor,
            end: cursor + spec.segment_seconds,
            activity,
            labels,
        });
        raw_tremor.push(raw);
        signals.push(signal);
        cursor += spec.segment_seconds + spec.break_seconds;
    }

    let break_signal = SegmentSignal {
        sway: sway(&mut rng),
        sway_amp: spec.sway_amplitude,
        tremor: None,
        dyskinesia: None,
        movement: Vec::new(),
    };
    let noise = Normal::new(0.0, spec.noise_sd.max(f64::MIN_POSITIVE)).expect("valid sd");
    let n_samples = (cursor * rate).round() as usize;
    let mut samples = Vec::with_capacity(n_samples);
    let mut seg_idx = 0;
    for i in 0..n_samples {
        let t = i as f64 / rate;
        while seg_idx < segments.len() && t >= segments[seg_idx].end {
            seg_idx += 1;
        }
        let active = segments
            .get(seg_idx)
            .filter(|s| t >= s.start)
            .map(|_| &signals[seg_idx])
            .unwrap_or(&break_signal);
        let mut v = [0.0; 3];
        for (axis, out) in v.iter_mut().enumerate() {
            let n = noise.sample(&mut rng);
            *out = traits.gravity[axis] + active.value(axis, t) + if spec.noise_sd > 0.0 { n } else { 0.0 };
        }
        samples.push(Sample {
            t,
            x: v[0],
            y: v[1],
            z: v[2],
        });
    }

    Ok(PatientData {
        recording: Recording::new(patient_id, samples, rate)?,
        segments,
        raw_tremor,
    })
}

fn segment_signal(
    spec: &CohortSpec,
    traits: &PatientTraits,
    activity: Activity,
    rng: &mut ChaCha8Rng,
) -> (SymptomLabels, u8, SegmentSignal) {
    // Draw every random quantity up front so the stream does not depend on
    // labels or amplitudes.
    let sway_tones = sway(rng);
    let u_tremor: f64 = rng.random();
    let u_severe: f64 = rng.random();
    let raw_severe: u8 = rng.random_range(2..=4);
    let tremor_tone = tones(rng, 1, 4.0, 6.0)[0];
    let two_axes = rng.random_bool(0.5);
    let mut axis_order = [0usize, 1, 2];
    axis_order.shuffle(rng);
    let second_weight: f64 = rng.random_range(0.5..1.0);
    let u_dysk: f64 = rng.random();
    let dysk_tones = tones(rng, 3, 1.0, 3.0);
    let dysk_gains: [f64; 3] = [rng.random_range(0.5..1.0), rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)];
    let u_brady: f64 = rng.random();
    let move_tones = tones(rng, 3, 0.5, 3.0);
    let move_dir = unit_vector(rng);
    let move_gains: [f64; 3] = [rng.random_range(0.5..1.0), rng.random_range(0.5..1.0), rng.random_range(0.5..1.0)];
    let fine_tones = tones(rng, 2, 3.0, 8.0);
    let fine_dir = unit_vector(rng);
    let harmonic_phases = [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)];
    let leak_phases = [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)];
    let periodic_freq: f64 = rng.random_range(1.0..2.0);

    let mut labels = SymptomLabels::default();
    let mut raw = 0u8;
    let mut signal = SegmentSignal {
        sway: sway_tones,
        sway_amp: spec.sway_amplitude,
        tremor: None,
        dyskinesia: None,
        movement: Vec::new(),
    };

    let gait = |freq: f64, phase: [f64; 2]| {
        vec![
            Tone { freq, phase: 0.0 },
            Tone {
                freq: 2.0 * freq,
                phase: phase[0],
            },
            Tone {
                freq: 3.0 * freq,
                phase: phase[1],
            },
        ]
    };

    match activity {
        Activity::Resting => {
            if u_tremor < spec.tremor_prevalence {
                let severe = u_severe < spec.tremor_severe_fraction;
                labels.tremor = if severe { 2 } else { 1 };
                raw = if severe { raw_severe } else { 1 };
                let amp = traits.tremor_gain
                    * if severe {
                        spec.tremor_amplitude_2
                    } else {
                        spec.tremor_amplitude_1
                    };
                let mut dir = [spec.tremor_leak; 3];
                dir[axis_order[0]] = 1.0;
                if two_axes {
                    dir[axis_order[1]] = second_weight;
                }
                let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
                signal.tremor = Some((tremor_tone, dir.map(|d| amp * d / norm)));
            }
            if u_dysk < spec.dyskinesia_prevalence {
                labels.dyskinesia = 1;
                let amp = traits.dyskinesia_gain * spec.dyskinesia_amplitude;
                signal.dyskinesia = Some((dysk_tones, dysk_gains.map(|g| amp * g)));
            }
        }
        Activity::Walking => {
            let amp = traits.walking_gain * spec.walking_amplitude;
            let mut main = [0.0; 3];
            main[traits.walking_axis] = amp;
            let mut leak = [0.1 * amp; 3];
            leak[traits.walking_axis] = 0.0;
            signal.movement.push((gait(traits.cadence, harmonic_phases), main.map(|g| g / 1.5)));
            signal.movement.push((gait(traits.cadence, leak_phases), leak.map(|g| g / 1.5)));
            if u_dysk < spec.walking_dyskinesia_prevalence {
                labels.dyskinesia = 1;
                let amp = traits.dyskinesia_gain * spec.walking_dyskinesia_amplitude;
                let mut gains = dysk_gains.map(|g| amp * g);
                gains[traits.walking_axis] = 0.0;
                signal.dyskinesia = Some((dysk_tones, gains));
            }
        }
        Activity::GrossUpperLimb => {
            let mut amp = traits.gross_gain * spec.gross_amplitude;
            if u_brady < spec.bradykinesia_prevalence {
                labels.bradykinesia = 1;
                amp *= spec.bradykinesia_factor;
            }
            signal.movement.push((move_tones, move_gains.map(|g| amp * g)));
            signal.movement.push((fine_tones, fine_dir.map(|d| 0.03 * d)));
        }
        Activity::FineUpperLimb => {
            signal.movement.push((fine_tones, fine_dir.map(|d| 0.05 * d)));
        }
        Activity::PeriodicHand => {
            let rotation = vec![Tone {
                freq: periodic_freq,
                phase: harmonic_phases[0],
            }];
            signal.movement.push((rotation, move_dir.map(|d| 0.4 * d)));
        }
    }
    (labels, raw, signal)
}

/// Generates every patient of the cohort (in parallel).
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<PatientData>, SynthError> {
    spec.validate()?;
    (0..spec.n_patients)
        .into_par_iter()
        .map(|i| generate_patient(spec, i))
        .collect()
}

pub fn recording_csv(rec: &Recording) -> String {
    let mut out = String::with_capacity(rec.samples.len() * 40);
    out.push_str("t,x,y,z\n");
    for s in &rec.samples {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6}", fmt_f64(s.t), s.x, s.y, s.z);
    }
    out
}

pub fn labels_csv(patients: &[PatientData]) -> String {
    let mut out = LABELS_HEADER.join(",");
    out.push('\n');
    for p in patients {
        for (seg, raw) in p.segments.iter().zip(&p.raw_tremor) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                seg.patient_id,
                fmt_f64(seg.start),
                fmt_f64(seg.end),
                seg.activity,
                raw,
                seg.labels.dyskinesia,
                seg.labels.bradykinesia
            );
        }
    }
    out
}

pub const RECORDINGS_DIR: &str = "recordings";
pub const LABELS_FILE: &str = "labels.csv";
pub const SPEC_FILE: &str = "cohort.spec";

/// Writes `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Writes `recordings/<patient>.csv`, `labels.csv` and the spec used.
pub fn write_cohort(spec: &CohortSpec, dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
    let patients = generate_cohort(spec)?;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    let rec_dir = dir.join(RECORDINGS_DIR);
    fs::create_dir_all(&rec_dir).map_err(io(&rec_dir))?;
    let mut written = Vec::new();
    for p in &patients {
        let path = rec_dir.join(format!("{}.csv", p.recording.patient_id));
        write_atomic(&path, recording_csv(&p.recording).as_bytes()).map_err(io(&path))?;
        written.push(path);
    }
    let labels = dir.join(LABELS_FILE);
    write_atomic(&labels, labels_csv(&patients).as_bytes()).map_err(io(&labels))?;
    written.push(labels);
    let spec_path = dir.join(SPEC_FILE);
    write_atomic(&spec_path, spec.to_kv().to_text().as_bytes()).map_err(io(&spec_path))?;
    written.push(spec_path);
    Ok(written)
}
