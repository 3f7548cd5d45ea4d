//! Linear soft-margin SVM trained from scratch, one-vs-all multiclass
//! wrapping, and sigmoid calibration of margins.

mod platt;
mod smo;

pub use platt::{fit_sigmoid, Sigmoid};
pub use smo::{optimal_bias, SmoSolution};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const DEFAULT_C: f64 = 1.0;
pub const GAP_TOLERANCE: f64 = 1e-4;
pub const MAX_ITERATIONS: usize = 1_000_000;
/// Fraction of each class held in for calibration.
pub const CALIBRATION_FRACTION: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvmError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("need at least two samples, got {0}")]
    TooFew(usize),
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label {0} is not -1 or +1")]
    BadLabel(i8),
    #[error("regularization C must be positive, got {0}")]
    BadC(f64),
}

/// Per-dimension centering and scaling learned from training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n).sqrt();
                // Constant columns are centered only.
                if sd > 1e-12 * m.abs().max(1e-300) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Weights in standardized feature space.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub standardizer: Standardizer,
}

impl LinearModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    /// Same decision function with the classes swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| -w).collect(),
            bias: -self.bias,
            c: self.c,
            standardizer: self.standardizer.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
    pub duality_gap: f64,
    pub dual_history: Vec<f64>,
    pub converged: bool,
}

fn check_matrix(x: &[Vec<f64>]) -> Result<usize, SvmError> {
    if x.len() < 2 {
        return Err(SvmError::TooFew(x.len()));
    }
    let d = x[0].len();
    for (row, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(SvmError::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite { row, col });
        }
    }
    Ok(d)
}

/// Trains a binary model on labels in {-1, +1}.
pub fn train_binary(x: &[Vec<f64>], y: &[i8], c: f64, seed: u64) -> Result<LinearModel, SvmError> {
    train_binary_report(x, y, c, seed).map(|(m, _)| m)
}

pub fn train_binary_report(
    x: &[Vec<f64>],
    y: &[i8],
    c: f64,
    seed: u64,
) -> Result<(LinearModel, TrainReport), SvmError> {
    check_matrix(x)?;
    if x.len() != y.len() {
        return Err(SvmError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if let Some(bad) = y.iter().find(|v| **v != 1 && **v != -1) {
        return Err(SvmError::BadLabel(*bad));
    }
    if !y.contains(&1) || !y.contains(&-1) {
        return Err(SvmError::SingleClass);
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(SvmError::BadC(c));
    }

    let standardizer = Standardizer::fit(x);
    // The seed fixes the order in which samples are presented to the solver.
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let xs: Vec<Vec<f64>> = order.iter().map(|&i| standardizer.apply(&x[i])).collect();
    let ys: Vec<f64> = order.iter().map(|&i| f64::from(y[i])).collect();

    let sol = smo::solve(
        &xs,
        &ys,
        &smo::SmoParams {
            c,
            gap_tolerance: GAP_TOLERANCE,
            max_iterations: MAX_ITERATIONS,
        },
    );
    if !sol.converged {
        log::warn!(
            "svm: stopped after {} iterations with duality gap {:e}",
            sol.iterations,
            sol.duality_gap()
        );
    }
    let report = TrainReport {
        iterations: sol.iterations,
        primal: sol.primal,
        dual: sol.dual,
        duality_gap: sol.duality_gap(),
        dual_history: sol.dual_history.clone(),
        converged: sol.converged,
    };
    Ok((
        LinearModel {
            weights: sol.weights,
            bias: sol.bias,
            c,
            standardizer,
        },
        report,
    ))
}

/// `w . standardize(x) + b`.
pub fn decision_margin(model: &LinearModel, x: &[f64]) -> Result<f64, SvmError> {
    if x.len() != model.feature_dim() {
        return Err(SvmError::DimensionMismatch {
            expected: model.feature_dim(),
            found: x.len(),
        });
    }
    let s = &model.standardizer;
    let mut acc = model.bias;
    for i in 0..x.len() {
        acc += model.weights[i] * ((x[i] - s.mean[i]) / s.scale[i]);
    }
    Ok(acc)
}

/// Fits a sigmoid to the model's margins on `(x_val, y_val)`.
pub fn calibrate_probability(
    model: &LinearModel,
    x_val: &[Vec<f64>],
    y_val: &[i8],
) -> Result<Sigmoid, SvmError> {
    let margins = x_val
        .iter()
        .map(|x| decision_margin(model, x))
        .collect::<Result<Vec<_>, _>>()?;
    let positive: Vec<bool> = y_val.iter().map(|v| *v > 0).collect();
    fit_sigmoid(&margins, &positive)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneVsAllModel {
    /// Ascending.
    pub classes: Vec<u8>,
    pub models: Vec<LinearModel>,
    pub calibration: Vec<Sigmoid>,
}

impl OneVsAllModel {
    pub fn feature_dim(&self) -> usize {
        self.models[0].feature_dim()
    }

    pub fn margins(&self, x: &[f64]) -> Result<Vec<f64>, SvmError> {
        self.models.iter().map(|m| decision_margin(m, x)).collect()
    }

    /// Calibrated probability that `x` belongs to `class`.
    pub fn probability(&self, x: &[f64], class: u8) -> Result<f64, SvmError> {
        let idx = self
            .classes
            .iter()
            .position(|c| *c == class)
            .ok_or(SvmError::BadLabel(class as i8))?;
        let m = decision_margin(&self.models[idx], x)?;
        Ok(self.calibration[idx].probability(m))
    }
}

/// Indices held in for calibration: the last 20% (at least one) of each
/// class after a seeded shuffle.
pub fn calibration_indices(labels: &[u8], seed: u64) -> Vec<usize> {
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut held = Vec::new();
    for class in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(class) + 1);
        idx.shuffle(&mut rng);
        let take = ((idx.len() as f64 * CALIBRATION_FRACTION).ceil() as usize).clamp(1, idx.len());
        held.extend_from_slice(&idx[idx.len() - take..]);
    }
    held.sort_unstable();
    held
}

/// One binary model per class present in `labels` (that class vs the rest).
/// With exactly two classes a single model is trained and mirrored.
pub fn train_one_vs_all(
    x: &[Vec<f64>],
    labels: &[u8],
    c: f64,
    seed: u64,
) -> Result<OneVsAllModel, SvmError> {
    if x.len() != labels.len() {
        return Err(SvmError::DimensionMismatch {
            expected: x.len(),
            found: labels.len(),
        });
    }
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(SvmError::SingleClass);
    }

    let binary = |class: u8| -> Vec<i8> {
        labels.iter().map(|l| if *l == class { 1 } else { -1 }).collect()
    };
    let models: Vec<LinearModel> = if classes.len() == 2 {
        let upper = train_binary(x, &binary(classes[1]), c, seed)?;
        vec![upper.mirrored(), upper]
    } else {
        classes
            .iter()
            .map(|&class| train_binary(x, &binary(class), c, seed))
            .collect::<Result<_, _>>()?
    };

    let held = calibration_indices(labels, seed);
    let x_cal: Vec<Vec<f64>> = held.iter().map(|&i| x[i].clone()).collect();
    let calibration = classes
        .iter()
        .zip(&models)
        .map(|(&class, model)| {
            let y_cal: Vec<i8> = held
                .iter()
                .map(|&i| if labels[i] == class { 1 } else { -1 })
                .collect();
            calibrate_probability(model, &x_cal, &y_cal)
        })
        .collect::<Result<_, _>>()?;

    Ok(OneVsAllModel {
        classes,
        models,
        calibration,
    })
}

/// Class with the largest margin; ties go to the lower label.
pub fn predict_class(model: &OneVsAllModel, x: &[f64]) -> Result<u8, SvmError> {
    Ok(argmax_class(&model.classes, &model.margins(x)?))
}

pub fn argmax_class(classes: &[u8], margins: &[f64]) -> u8 {
    let mut best = 0;
    for i in 1..margins.len() {
        if margins[i] > margins[best] {
            best = i;
        }
    }
    classes[best]
}
