//! Leave-one-patient-out evaluation, confusion matrices and ROC analysis.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::symptoms::{self, DetectorConfig, DetectorKind, FeaturedWindow, SymptomError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("leave-one-patient-out needs at least 2 patients, got {0}")]
    TooFewPatients(usize),
    #[error("{0} true labels but {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("label {0} is not in the label order")]
    UnknownLabel(u8),
    #[error("ROC needs both classes among the labels")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("patient {0} appears in its own training set")]
    Leakage(String),
    #[error(transparent)]
    Symptom(#[from] SymptomError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test_patient: String,
    pub train_patients: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// One fold per distinct patient, ordered by patient id.
pub fn lopo_folds<S: AsRef<str>>(patient_ids: &[S]) -> Result<FoldPlan, EvalError> {
    let ids: BTreeSet<&str> = patient_ids.iter().map(AsRef::as_ref).collect();
    if ids.len() < 2 {
        return Err(EvalError::TooFewPatients(ids.len()));
    }
    let folds = ids
        .iter()
        .map(|test| Fold {
            test_patient: test.to_string(),
            train_patients: ids.iter().filter(|p| *p != test).map(|p| p.to_string()).collect(),
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// Rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<u8>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: &[u8]) -> Self {
        Self {
            labels: labels.to_vec(),
            counts: vec![vec![0; labels.len()]; labels.len()],
        }
    }

    fn index(&self, label: u8) -> Result<usize, EvalError> {
        self.labels
            .iter()
            .position(|l| *l == label)
            .ok_or(EvalError::UnknownLabel(label))
    }

    pub fn record(&mut self, truth: u8, predicted: u8) -> Result<(), EvalError> {
        let (i, j) = (self.index(truth)?, self.index(predicted)?);
        self.counts[i][j] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.labels, other.labels, "label orders differ");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// `True/Pred` table with one row per true label.
    pub fn to_table(&self) -> String {
        let cells: Vec<Vec<String>> = std::iter::once(
            std::iter::once("True/Pred".to_string())
                .chain(self.labels.iter().map(u8::to_string))
                .collect(),
        )
        .chain(self.labels.iter().zip(&self.counts).map(|(l, row)| {
            std::iter::once(l.to_string())
                .chain(row.iter().map(u64::to_string))
                .collect()
        }))
        .collect();
        let width = cells.iter().flatten().map(String::len).max().unwrap_or(1);
        let mut out = String::new();
        for row in cells {
            let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
            let _ = writeln!(out, "| {} |", line.join(" | "));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for l in &self.labels {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "{l}");
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(
    truth: &[u8],
    predicted: &[u8],
    label_order: &[u8],
) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch(truth.len(), predicted.len()));
    }
    let mut m = ConfusionMatrix::zeros(label_order);
    for (t, p) in truth.iter().zip(predicted) {
        m.record(*t, *p)?;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC by sweeping the threshold over the distinct scores, highest first.
/// Tied scores move diagonally, so the trapezoid area equals the
/// Mann-Whitney statistic with ties counted as one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(labels.len(), scores.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let pos = labels.iter().filter(|l| **l > 0).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area, in units of one positive times one negative.
    let mut area2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] > 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) * (tp0 + tp);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve {
        points,
        auc: area2 as f64 / (2 * pos * neg) as f64,
    })
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr\n");
        for (x, y) in &self.points {
            let _ = writeln!(out, "{x:.6},{y:.6}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub test_patient: String,
    pub train_patients: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub matrix: ConfusionMatrix,
    pub auc: Option<f64>,
    /// Reason the fold could not be trained.
    pub skipped: Option<String>,
    pub truth: Vec<u8>,
    pub predicted: Vec<u8>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LopoReport {
    pub kind: DetectorKind,
    pub config: DetectorConfig,
    pub folds: Vec<FoldResult>,
    pub pooled: ConfusionMatrix,
    pub roc: Option<RocCurve>,
    pub mean_fold_auc: Option<f64>,
}

impl LopoReport {
    pub fn evaluated_folds(&self) -> usize {
        self.folds.iter().filter(|f| f.skipped.is_none()).count()
    }
}

fn run_fold(
    kind: DetectorKind,
    windows: &[&FeaturedWindow],
    fold: &Fold,
    config: &DetectorConfig,
) -> Result<FoldResult, EvalError> {
    let train: Vec<FeaturedWindow> = windows
        .iter()
        .filter(|w| w.patient_id != fold.test_patient)
        .map(|w| (*w).clone())
        .collect();
    let test: Vec<&FeaturedWindow> = windows
        .iter()
        .copied()
        .filter(|w| w.patient_id == fold.test_patient)
        .collect();
    if train.iter().any(|w| w.patient_id == fold.test_patient)
        || fold.train_patients.contains(&fold.test_patient)
    {
        return Err(EvalError::Leakage(fold.test_patient.clone()));
    }

    let classes = kind.classes();
    let mut result = FoldResult {
        test_patient: fold.test_patient.clone(),
        train_patients: fold.train_patients.clone(),
        n_train: train.len(),
        n_test: test.len(),
        matrix: ConfusionMatrix::zeros(&classes),
        auc: None,
        skipped: None,
        truth: Vec::new(),
        predicted: Vec::new(),
        scores: Vec::new(),
    };
    let model = match symptoms::train_detector(kind, &train, config) {
        Ok(m) => m,
        Err(e @ (SymptomError::Svm(_) | SymptomError::NoData(_))) => {
            result.skipped = Some(e.to_string());
            return Ok(result);
        }
        Err(e) => return Err(e.into()),
    };
    for w in test {
        let p = symptoms::predict_features(&model, &w.features)?;
        let truth = kind.label(&w.labels);
        result.matrix.record(truth, p.label)?;
        result.truth.push(truth);
        result.predicted.push(p.label);
        if let Some(prob) = p.probability {
            result.scores.push(prob);
        }
    }
    if kind.is_binary() {
        result.auc = roc_auc(&result.scores, &result.truth).ok().map(|r| r.auc);
    }
    Ok(result)
}

/// Leave-one-patient-out evaluation of `kind` over the windows of its activity.
///
/// Folds run in parallel; results are assembled in fold order so the report
/// does not depend on scheduling.
pub fn run_lopo(
    windows: &[FeaturedWindow],
    kind: DetectorKind,
    config: &DetectorConfig,
) -> Result<LopoReport, EvalError> {
    let relevant: Vec<&FeaturedWindow> = windows.iter().filter(|w| w.activity == kind.activity()).collect();
    let ids: Vec<&str> = relevant.iter().map(|w| w.patient_id.as_str()).collect();
    let plan = lopo_folds(&ids)?;

    let folds = plan
        .folds
        .par_iter()
        .map(|fold| run_fold(kind, &relevant, fold, config))
        .collect::<Result<Vec<_>, _>>()?;

    let mut pooled = ConfusionMatrix::zeros(&kind.classes());
    for f in &folds {
        pooled.add(&f.matrix);
    }
    let (roc, mean_fold_auc) = if kind.is_binary() {
        let scores: Vec<f64> = folds.iter().flat_map(|f| f.scores.iter().copied()).collect();
        let truth: Vec<u8> = folds
            .iter()
            .filter(|f| f.skipped.is_none())
            .flat_map(|f| f.truth.iter().copied())
            .collect();
        let aucs: Vec<f64> = folds.iter().filter_map(|f| f.auc).collect();
        let mean = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
        (roc_auc(&scores, &truth).ok(), mean)
    } else {
        (None, None)
    };

    Ok(LopoReport {
        kind,
        config: *config,
        folds,
        pooled,
        roc,
        mean_fold_auc,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

/// Pipeline settings recorded in every report artifact.
pub fn config_header_common(config: &DetectorConfig) -> String {
    format!(
        "window_seconds={} overlap={} wavelet_taps={} svm_c={} theta1={} theta2={} binary_threshold={} seed={}",
        config.window.window_seconds,
        config.window.overlap,
        config.wavelet_taps,
        config.c,
        config.thresholds.theta1,
        config.thresholds.theta2,
        config.binary_threshold,
        config.seed
    )
}

pub fn config_header(kind: DetectorKind, config: &DetectorConfig) -> String {
    format!("detector={kind} {}", config_header_common(config))
}

impl LopoReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", config_header(self.kind, &self.config));
        let _ = writeln!(
            out,
            "leave-one-patient-out: {} folds ({} evaluated, {} skipped)",
            self.folds.len(),
            self.evaluated_folds(),
            self.folds.len() - self.evaluated_folds()
        );
        for f in self.folds.iter().filter(|f| f.skipped.is_some()) {
            let _ = writeln!(
                out,
                "skipped fold {}: {}",
                f.test_patient,
                f.skipped.as_deref().unwrap_or("")
            );
        }
        let _ = writeln!(out, "\npooled confusion matrix ({} windows):", self.pooled.total());
        out.push_str(&self.pooled.to_table());
        let _ = writeln!(out, "accuracy: {:.4}", self.pooled.accuracy());
        if self.kind.is_binary() {
            let _ = writeln!(out, "AUC (pooled): {}", opt(self.roc.as_ref().map(|r| r.auc)));
            let _ = writeln!(out, "AUC (mean over folds): {}", opt(self.mean_fold_auc));
        }
        out
    }

    pub fn folds_csv(&self) -> String {
        let mut out = format!("# {}\n", config_header(self.kind, &self.config));
        out.push_str("test_patient,n_train,n_test,accuracy,auc,skipped\n");
        for f in &self.folds {
            let acc = (f.matrix.total() > 0).then(|| f.matrix.accuracy());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                f.test_patient,
                f.n_train,
                f.n_test,
                opt(acc),
                opt(f.auc),
                f.skipped.as_deref().unwrap_or("")
            );
        }
        out
    }
}
