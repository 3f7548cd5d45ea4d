//! Command-line front end: `synth`, `featurize`, `train`, `evaluate`, `predict`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use thiserror::Error;

use crate::eval::{self, EvalError};
use crate::features::{feature_csv_header, feature_csv_row, FeatureError};
use crate::ingest::{self, IngestError, Recording, SymptomLabels, TaskSegment, Window, WindowConfig};
use crate::modelfile::{self, ModelFileError};
use crate::symptoms::{self, DetectorConfig, DetectorKind, SymptomError, TremorThresholds};
use crate::synth::{self, write_atomic, CohortSpec, SynthError};
use crate::svm::SvmError;
use crate::wavelet::{Wavelet, WaveletError};

/// Header of the per-window prediction CSV.
pub const PREDICTION_HEADER: &str = "window_start,window_end,prediction";

#[derive(Debug, Parser)]
#[command(name = "pdwave", version, about = "Wavelet-energy symptom detection from wrist accelerometry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic cohort.
    Synth {
        /// Cohort spec (`key = value`); defaults are used when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the feature vector of every labeled window as CSV.
    Featurize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Train one detector on a data directory and write its model file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        detector: DetectorKind,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Leave-one-patient-out evaluation of one detector.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        detector: DetectorKind,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Per-window predictions for one recording.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        recording: PathBuf,
        /// Task labels; without them the whole recording is treated as the
        /// model's activity.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Patient id used to match labels (defaults to the file stem).
        #[arg(long)]
        patient: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 10.0)]
    pub window_seconds: f64,
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    /// Daubechies filter length (2, 4, 6 or 8 taps).
    #[arg(long, default_value_t = 4)]
    pub wavelet_order: usize,
    #[arg(long, default_value_t = 1.0)]
    pub svm_c: f64,
    #[arg(long, default_value_t = 2)]
    pub theta1: u8,
    #[arg(long, default_value_t = 0)]
    pub theta2: u8,
    /// Binary detectors flag a window when more than this many axes are positive.
    #[arg(long, default_value_t = 0)]
    pub binary_threshold: u8,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

impl Default for PipelineArgs {
    fn default() -> Self {
        let cfg = DetectorConfig::default();
        Self {
            window_seconds: cfg.window.window_seconds,
            overlap: cfg.window.overlap,
            wavelet_order: cfg.wavelet_taps,
            svm_c: cfg.c,
            theta1: cfg.thresholds.theta1,
            theta2: cfg.thresholds.theta2,
            binary_threshold: cfg.binary_threshold,
            seed: cfg.seed,
        }
    }
}

impl PipelineArgs {
    pub fn config(&self) -> Result<DetectorConfig, CliError> {
        let window = WindowConfig {
            window_seconds: self.window_seconds,
            overlap: self.overlap,
            ..WindowConfig::default()
        };
        window.validate().map_err(CliError::user)?;
        Wavelet::daubechies(self.wavelet_order).map_err(CliError::user)?;
        if !(self.svm_c > 0.0 && self.svm_c.is_finite()) {
            return Err(CliError::user(format!("--svm-c must be positive, got {}", self.svm_c)));
        }
        if self.binary_threshold > 2 {
            return Err(CliError::user(format!(
                "--binary-threshold must be 0, 1 or 2, got {}",
                self.binary_threshold
            )));
        }
        Ok(DetectorConfig {
            c: self.svm_c,
            seed: self.seed,
            thresholds: TremorThresholds::new(self.theta1, self.theta2).map_err(CliError::user)?,
            binary_threshold: self.binary_threshold,
            window,
            wavelet_taps: self.wavelet_order,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad flags, bad input files or unusable data.
    User,
    Internal,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn user(e: impl ToString) -> Self {
        Self {
            class: ErrorClass::User,
            message: e.to_string(),
        }
    }

    pub fn internal(e: impl ToString) -> Self {
        Self {
            class: ErrorClass::Internal,
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::User => 2,
            ErrorClass::Internal => 1,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::user(e)
    }
}

impl From<SymptomError> for CliError {
    fn from(e: SymptomError) -> Self {
        match &e {
            SymptomError::Svm(SvmError::NonFinite { .. }) => CliError::internal(e),
            SymptomError::Svm(_)
            | SymptomError::NoData(_)
            | SymptomError::ActivityMismatch { .. }
            | SymptomError::KindMismatch { .. }
            | SymptomError::Thresholds { .. }
            | SymptomError::FeatureDim { .. } => CliError::user(e),
            SymptomError::Feature(_) | SymptomError::Wavelet(_) => CliError::internal(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Symptom(s) => s.into(),
            EvalError::TooFewPatients(_) => CliError::user(e),
            _ => CliError::internal(e),
        }
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        CliError::user(e)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io { .. } => CliError::internal(e),
            _ => CliError::user(e),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::internal(e)
    }
}

impl From<WaveletError> for CliError {
    fn from(e: WaveletError) -> Self {
        CliError::internal(e)
    }
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::internal(format!("{}: {e}", parent.display())))?;
    }
    write_atomic(path, contents.as_bytes()).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

/// Recordings and task labels of a data directory.
pub struct Dataset {
    pub recordings: Vec<Recording>,
    pub segments: Vec<TaskSegment>,
}

/// Reads `labels.csv` and `recordings/*.csv` (patient id = file stem).
pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let labels = dir.join(synth::LABELS_FILE);
    if !labels.is_file() {
        return Err(CliError::user(format!("missing labels file {}", labels.display())));
    }
    let segments = ingest::parse_labels(&labels)?;
    let rec_dir = dir.join(synth::RECORDINGS_DIR);
    let entries = std::fs::read_dir(&rec_dir).map_err(|e| CliError::user(format!("{}: {e}", rec_dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::user(format!("no recordings in {}", rec_dir.display())));
    }
    let mut recordings = Vec::with_capacity(paths.len());
    for path in paths {
        let id = stem(&path)?;
        if !segments.iter().any(|s| s.patient_id == id) {
            warn!("recording {id} has no labeled segments");
        }
        recordings.push(ingest::parse_recording(&path, &id)?);
    }
    Ok(Dataset { recordings, segments })
}

fn stem(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| CliError::user(format!("cannot derive a patient id from {}", path.display())))
}

pub fn dataset_windows(data: &Dataset, window: &WindowConfig) -> Result<Vec<Window>, CliError> {
    let mut out = Vec::new();
    for rec in &data.recordings {
        out.extend(ingest::segment_windows(rec, &data.segments, window)?);
    }
    Ok(out)
}

fn featured(dir: &Path, cfg: &DetectorConfig) -> Result<Vec<symptoms::FeaturedWindow>, CliError> {
    let data = load_dataset(dir)?;
    let windows = dataset_windows(&data, &cfg.window)?;
    info!("{} windows from {} recordings", windows.len(), data.recordings.len());
    Ok(symptoms::featurize_all(&windows, &Wavelet::daubechies(cfg.wavelet_taps)?)?)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { spec, seed, out } => cmd_synth(spec.as_deref(), seed, &out),
        Command::Featurize { data, out, pipeline } => cmd_featurize(&data, &out, &pipeline.config()?),
        Command::Train {
            data,
            detector,
            out,
            pipeline,
        } => cmd_train(&data, detector, &out, &pipeline.config()?),
        Command::Evaluate {
            data,
            detector,
            out,
            pipeline,
        } => {
            print!("{}", cmd_evaluate(&data, detector, &out, &pipeline.config()?)?);
            Ok(())
        }
        Command::Predict {
            model,
            recording,
            labels,
            patient,
            out,
        } => cmd_predict(&model, &recording, labels.as_deref(), patient.as_deref(), &out),
    }
}

pub fn cmd_synth(spec: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut spec = match spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
            CohortSpec::parse(&text)?
        }
        None => CohortSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let written = synth::write_cohort(&spec, out)?;
    info!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}

pub fn cmd_featurize(data: &Path, out: &Path, cfg: &DetectorConfig) -> Result<(), CliError> {
    let dataset = load_dataset(data)?;
    let windows = dataset_windows(&dataset, &cfg.window)?;
    let wavelet = Wavelet::daubechies(cfg.wavelet_taps)?;
    let featured = symptoms::featurize_all(&windows, &wavelet)?;
    let mut text = format!("# {}\n", eval::config_header_common(cfg));
    match featured.first() {
        Some(f) => text.push_str(&feature_csv_header(f.features.k())),
        None => {
            return Err(CliError::user(format!("no labeled windows in {}", data.display())));
        }
    }
    text.push('\n');
    for (w, f) in windows.iter().zip(&featured) {
        text.push_str(&feature_csv_row(w, &f.features));
        text.push('\n');
    }
    write_output(out, &text)?;
    info!("wrote {} feature rows to {}", featured.len(), out.display());
    Ok(())
}

pub fn cmd_train(data: &Path, kind: DetectorKind, out: &Path, cfg: &DetectorConfig) -> Result<(), CliError> {
    let windows: Vec<_> = featured(data, cfg)?
        .into_iter()
        .filter(|w| w.activity == kind.activity())
        .collect();
    let model = symptoms::train_detector(kind, &windows, cfg)?;

    let mut correct = 0usize;
    for w in &windows {
        let p = symptoms::predict_features(&model, &w.features)?;
        correct += usize::from(p.label == kind.label(&w.labels));
    }
    info!(
        "{kind}: {} training windows, training accuracy {:.4}",
        windows.len(),
        correct as f64 / windows.len() as f64
    );
    write_output(out, &modelfile::model_to_text(&model))
}

/// Files written by `evaluate`.
pub const REPORT_FILE: &str = "report.txt";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const FOLDS_FILE: &str = "folds.csv";
pub const ROC_FILE: &str = "roc.csv";

/// Writes the report files and returns the text report.
pub fn cmd_evaluate(data: &Path, kind: DetectorKind, out: &Path, cfg: &DetectorConfig) -> Result<String, CliError> {
    let windows = featured(data, cfg)?;
    let report = eval::run_lopo(&windows, kind, cfg)?;
    let header = format!("# {}\n", eval::config_header(kind, cfg));
    let text = report.to_text();
    write_output(&out.join(REPORT_FILE), &text)?;
    write_output(&out.join(CONFUSION_FILE), &format!("{header}{}", report.pooled.to_csv()))?;
    write_output(&out.join(FOLDS_FILE), &report.folds_csv())?;
    if let Some(roc) = &report.roc {
        write_output(&out.join(ROC_FILE), &format!("{header}{}", roc.to_csv()))?;
    }
    Ok(text)
}

pub fn cmd_predict(
    model_path: &Path,
    recording: &Path,
    labels: Option<&Path>,
    patient: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let model = modelfile::read_model(model_path)?;
    let id = match patient {
        Some(p) => p.to_string(),
        None => stem(recording)?,
    };
    let binary = model.kind.is_binary();
    let mut text = String::from(PREDICTION_HEADER);
    if binary {
        text.push_str(",probability");
    }
    text.push('\n');

    let rec = match ingest::parse_recording(recording, &id) {
        Ok(rec) => Some(rec),
        Err(IngestError::Empty) => None,
        Err(e) => return Err(e.into()),
    };
    if let Some(rec) = rec {
        let segments = match labels {
            Some(path) => ingest::parse_labels(path)?
                .into_iter()
                .filter(|s| s.patient_id == id && s.activity == model.activity)
                .collect(),
            None => vec![whole_recording(&rec, &model)],
        };
        let windows = ingest::segment_windows(&rec, &segments, &model.config.window)?;
        let wavelet = Wavelet::daubechies(model.config.wavelet_taps)?;
        let featured = symptoms::featurize_all(&windows, &wavelet)?;
        for f in &featured {
            let p = symptoms::predict_features(&model, &f.features)?;
            let _ = write!(text, "{:?},{:?},{}", f.start, f.end, p.label);
            if let Some(prob) = p.probability {
                let _ = write!(text, ",{prob:.6}");
            }
            text.push('\n');
        }
        info!("{} windows predicted", featured.len());
    }
    write_output(out, &text)
}

fn whole_recording(rec: &Recording, model: &symptoms::SymptomModel) -> TaskSegment {
    let first = rec.samples[0].t;
    let last = rec.samples.last().map_or(first, |s| s.t);
    TaskSegment {
        patient_id: rec.patient_id.clone(),
        start: first,
        end: last + 1.0 / rec.nominal_rate,
        activity: model.activity,
        labels: SymptomLabels::default(),
    }
}
