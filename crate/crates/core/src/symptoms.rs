//! The four symptom detectors.
//!
//! Rest tremor trains a one-vs-all SVM on axis-averaged relative energies,
//! scores each axis separately with that model and thresholds the summed
//! per-axis levels. The binary detectors (rest dyskinesia, bradykinesia)
//! train on per-axis rows stacked as independent samples, call a window
//! positive when enough axes are positive, and report the mean calibrated
//! per-axis probability. Walking dyskinesia uses one row of axis-ratio
//! features per window.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::features::{build_feature_vector, FeatureError, FeatureVector};
use crate::ingest::{Activity, SymptomLabels, Window, WindowConfig};
use crate::svm::{self, OneVsAllModel, SvmError};
use crate::wavelet::{Wavelet, WaveletError};

#[derive(Debug, Error)]
pub enum SymptomError {
    #[error("{kind} detector expects {expected} windows, got {found}")]
    ActivityMismatch {
        kind: DetectorKind,
        expected: Activity,
        found: Activity,
    },
    #[error("model is a {found} detector, not {expected}")]
    KindMismatch {
        expected: DetectorKind,
        found: DetectorKind,
    },
    #[error("no {0} windows to train on")]
    NoData(DetectorKind),
    #[error("invalid tremor thresholds: need 0 <= theta2 < theta1 <= 6, got theta1={theta1} theta2={theta2}")]
    Thresholds { theta1: u8, theta2: u8 },
    #[error("model expects {expected} features, window gives {found}")]
    FeatureDim { expected: usize, found: usize },
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorKind {
    RestTremor,
    RestDyskinesia,
    WalkingDyskinesia,
    Bradykinesia,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::RestTremor,
        DetectorKind::RestDyskinesia,
        DetectorKind::WalkingDyskinesia,
        DetectorKind::Bradykinesia,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::RestTremor => "rest-tremor",
            DetectorKind::RestDyskinesia => "rest-dyskinesia",
            DetectorKind::WalkingDyskinesia => "walking-dyskinesia",
            DetectorKind::Bradykinesia => "bradykinesia",
        }
    }

    pub fn activity(self) -> Activity {
        match self {
            DetectorKind::RestTremor | DetectorKind::RestDyskinesia => Activity::Resting,
            DetectorKind::WalkingDyskinesia => Activity::Walking,
            DetectorKind::Bradykinesia => Activity::GrossUpperLimb,
        }
    }

    pub fn recipe(self) -> FeatureRecipe {
        match self {
            DetectorKind::RestTremor => FeatureRecipe::Rel,
            DetectorKind::RestDyskinesia => FeatureRecipe::ContRel,
            DetectorKind::WalkingDyskinesia => FeatureRecipe::WalkRatio,
            DetectorKind::Bradykinesia => FeatureRecipe::Rel,
        }
    }

    pub fn is_binary(self) -> bool {
        self != DetectorKind::RestTremor
    }

    /// Ordered class labels of the detector output.
    pub fn classes(self) -> Vec<u8> {
        if self.is_binary() {
            vec![0, 1]
        } else {
            vec![0, 1, 2]
        }
    }

    pub fn label(self, labels: &SymptomLabels) -> u8 {
        match self {
            DetectorKind::RestTremor => labels.tremor,
            DetectorKind::RestDyskinesia | DetectorKind::WalkingDyskinesia => labels.dyskinesia,
            DetectorKind::Bradykinesia => labels.bradykinesia,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown detector `{s}`"))
    }
}

/// Which feature blocks feed the SVM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureRecipe {
    /// `rel` per axis; the tremor detector trains on `rel_avg`.
    Rel,
    /// `[cont, rel]` per axis.
    ContRel,
    /// Walking axis ratios `w`, one row per window.
    WalkRatio,
}

impl FeatureRecipe {
    pub fn name(self) -> &'static str {
        match self {
            FeatureRecipe::Rel => "rel",
            FeatureRecipe::ContRel => "cont_rel",
            FeatureRecipe::WalkRatio => "walk_ratio",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [FeatureRecipe::Rel, FeatureRecipe::ContRel, FeatureRecipe::WalkRatio]
            .into_iter()
            .find(|r| r.name() == s)
    }

    pub fn dim(self, k: usize) -> usize {
        match self {
            FeatureRecipe::ContRel => 2 * k,
            FeatureRecipe::Rel | FeatureRecipe::WalkRatio => k,
        }
    }

    pub fn feature_names(self, k: usize) -> Vec<String> {
        let levels = |prefix: &'static str| (1..=k).map(move |j| format!("{prefix}_{j}"));
        match self {
            FeatureRecipe::Rel => levels("rel").collect(),
            FeatureRecipe::ContRel => levels("cont").chain(levels("rel")).collect(),
            FeatureRecipe::WalkRatio => levels("w").collect(),
        }
    }

    /// Rows the model scores at prediction time (one per axis, or one per window).
    pub fn views(self, f: &FeatureVector) -> Vec<Vec<f64>> {
        match self {
            FeatureRecipe::Rel => f.rel.to_vec(),
            FeatureRecipe::ContRel => (0..3)
                .map(|a| [f.cont[a].as_slice(), f.rel[a].as_slice()].concat())
                .collect(),
            FeatureRecipe::WalkRatio => vec![f.w.clone()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TremorThresholds {
    pub theta1: u8,
    pub theta2: u8,
}

impl Default for TremorThresholds {
    fn default() -> Self {
        Self {
            theta1: 2,
            theta2: 0,
        }
    }
}

impl TremorThresholds {
    pub fn new(theta1: u8, theta2: u8) -> Result<Self, SymptomError> {
        if theta2 < theta1 && theta1 <= 6 {
            Ok(Self { theta1, theta2 })
        } else {
            Err(SymptomError::Thresholds { theta1, theta2 })
        }
    }
}

/// Maps the summed per-axis tremor levels to a window level.
pub fn tremor_decision(per_axis: [u8; 3], thresholds: TremorThresholds) -> u8 {
    let total: u8 = per_axis.iter().sum();
    if total > thresholds.theta1 {
        2
    } else if total > thresholds.theta2 {
        1
    } else {
        0
    }
}

/// Window probability reported by binary detectors: the mean over views.
pub fn mean_probability(per_view: &[f64]) -> f64 {
    per_view.iter().sum::<f64>() / per_view.len() as f64
}

/// Positive when more than `threshold` views are positive.
pub fn binary_decision(per_view: &[u8], threshold: u8) -> u8 {
    let positives = per_view.iter().filter(|p| **p > 0).count();
    u8::from(positives > threshold as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Tremor(TremorThresholds),
    /// Number of positive views that must be exceeded.
    Binary { threshold: u8 },
}

/// Knobs shared by training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub c: f64,
    pub seed: u64,
    pub thresholds: TremorThresholds,
    pub binary_threshold: u8,
    pub window: WindowConfig,
    pub wavelet_taps: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            c: svm::DEFAULT_C,
            seed: 42,
            thresholds: TremorThresholds::default(),
            binary_threshold: 0,
            window: WindowConfig::default(),
            wavelet_taps: 4,
        }
    }
}

/// A window reduced to its features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturedWindow {
    pub patient_id: String,
    pub activity: Activity,
    pub labels: SymptomLabels,
    pub start: f64,
    pub end: f64,
    pub features: FeatureVector,
}

pub fn featurize(window: &Window, wavelet: &Wavelet) -> Result<FeaturedWindow, SymptomError> {
    Ok(FeaturedWindow {
        patient_id: window.patient_id.clone(),
        activity: window.activity,
        labels: window.labels,
        start: window.start,
        end: window.end,
        features: build_feature_vector(window, wavelet)?,
    })
}

pub fn featurize_all(windows: &[Window], wavelet: &Wavelet) -> Result<Vec<FeaturedWindow>, SymptomError> {
    windows.par_iter().map(|w| featurize(w, wavelet)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymptomModel {
    pub kind: DetectorKind,
    pub svm: OneVsAllModel,
    pub decision: Decision,
    pub recipe: FeatureRecipe,
    pub activity: Activity,
    /// Number of wavelet scales per axis.
    pub k: usize,
    pub config: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: u8,
    /// Mean calibrated probability of the positive class (binary kinds).
    pub probability: Option<f64>,
    pub per_view: Vec<u8>,
}

fn training_rows(kind: DetectorKind, w: &FeaturedWindow) -> Vec<Vec<f64>> {
    match kind {
        DetectorKind::RestTremor => vec![w.features.rel_avg.clone()],
        _ => kind.recipe().views(&w.features),
    }
}

/// Trains `kind` on featured windows, which must all carry the detector's activity.
pub fn train_detector(
    kind: DetectorKind,
    windows: &[FeaturedWindow],
    config: &DetectorConfig,
) -> Result<SymptomModel, SymptomError> {
    let expected = kind.activity();
    if let Some(bad) = windows.iter().find(|w| w.activity != expected) {
        return Err(SymptomError::ActivityMismatch {
            kind,
            expected,
            found: bad.activity,
        });
    }
    let first = windows.first().ok_or(SymptomError::NoData(kind))?;
    let k = first.features.k();

    let mut x = Vec::new();
    let mut y = Vec::new();
    for w in windows {
        if w.features.k() != k {
            return Err(SymptomError::FeatureDim {
                expected: k,
                found: w.features.k(),
            });
        }
        let label = kind.label(&w.labels);
        for row in training_rows(kind, w) {
            x.push(row);
            y.push(label);
        }
    }
    let svm = svm::train_one_vs_all(&x, &y, config.c, config.seed)?;
    let decision = if kind.is_binary() {
        Decision::Binary {
            threshold: config.binary_threshold,
        }
    } else {
        Decision::Tremor(config.thresholds)
    };
    Ok(SymptomModel {
        kind,
        svm,
        decision,
        recipe: kind.recipe(),
        activity: expected,
        k,
        config: *config,
    })
}

/// Per-window prediction from precomputed features.
pub fn predict_features(model: &SymptomModel, features: &FeatureVector) -> Result<Prediction, SymptomError> {
    if features.k() != model.k {
        return Err(SymptomError::FeatureDim {
            expected: model.recipe.dim(model.k),
            found: model.recipe.dim(features.k()),
        });
    }
    let views = model.recipe.views(features);
    let per_view = views
        .iter()
        .map(|v| svm::predict_class(&model.svm, v))
        .collect::<Result<Vec<u8>, _>>()?;
    match model.decision {
        Decision::Tremor(thresholds) => {
            let triple = [per_view[0], per_view[1], per_view[2]];
            Ok(Prediction {
                label: tremor_decision(triple, thresholds),
                probability: None,
                per_view,
            })
        }
        Decision::Binary { threshold } => {
            let probs = views
                .iter()
                .map(|v| model.svm.probability(v, 1))
                .collect::<Result<Vec<f64>, _>>()?;
            Ok(Prediction {
                label: binary_decision(&per_view, threshold),
                probability: Some(mean_probability(&probs)),
                per_view,
            })
        }
    }
}

pub fn predict_window(model: &SymptomModel, window: &Window) -> Result<Prediction, SymptomError> {
    if window.activity != model.activity {
        return Err(SymptomError::ActivityMismatch {
            kind: model.kind,
            expected: model.activity,
            found: window.activity,
        });
    }
    let wavelet = Wavelet::daubechies(model.config.wavelet_taps)?;
    predict_features(model, &build_feature_vector(window, &wavelet)?)
}

fn train_windows(kind: DetectorKind, windows: &[Window], config: &DetectorConfig) -> Result<SymptomModel, SymptomError> {
    let wavelet = Wavelet::daubechies(config.wavelet_taps)?;
    train_detector(kind, &featurize_all(windows, &wavelet)?, config)
}

pub fn train_rest_tremor(windows: &[Window], config: &DetectorConfig) -> Result<SymptomModel, SymptomError> {
    train_windows(DetectorKind::RestTremor, windows, config)
}

pub fn train_rest_dyskinesia(windows: &[Window], config: &DetectorConfig) -> Result<SymptomModel, SymptomError> {
    train_windows(DetectorKind::RestDyskinesia, windows, config)
}

pub fn train_walking_dyskinesia(windows: &[Window], config: &DetectorConfig) -> Result<SymptomModel, SymptomError> {
    train_windows(DetectorKind::WalkingDyskinesia, windows, config)
}

pub fn train_bradykinesia(windows: &[Window], config: &DetectorConfig) -> Result<SymptomModel, SymptomError> {
    train_windows(DetectorKind::Bradykinesia, windows, config)
}

fn check_kind(model: &SymptomModel, kind: DetectorKind) -> Result<(), SymptomError> {
    if model.kind == kind {
        Ok(())
    } else {
        Err(SymptomError::KindMismatch {
            expected: kind,
            found: model.kind,
        })
    }
}

pub fn predict_rest_tremor(model: &SymptomModel, window: &Window) -> Result<u8, SymptomError> {
    check_kind(model, DetectorKind::RestTremor)?;
    Ok(predict_window(model, window)?.label)
}

/// Class and mean per-axis probability.
pub fn predict_rest_dyskinesia(model: &SymptomModel, window: &Window) -> Result<(u8, f64), SymptomError> {
    check_kind(model, DetectorKind::RestDyskinesia)?;
    let p = predict_window(model, window)?;
    Ok((p.label, p.probability.unwrap_or_default()))
}

pub fn predict_walking_dyskinesia(model: &SymptomModel, window: &Window) -> Result<(u8, f64), SymptomError> {
    check_kind(model, DetectorKind::WalkingDyskinesia)?;
    let p = predict_window(model, window)?;
    Ok((p.label, p.probability.unwrap_or_default()))
}

pub fn predict_bradykinesia(model: &SymptomModel, window: &Window) -> Result<u8, SymptomError> {
    check_kind(model, DetectorKind::Bradykinesia)?;
    Ok(predict_window(model, window)?.label)
}
