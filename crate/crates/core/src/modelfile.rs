//! Detector model files: versioned `key = value` documents.
//!
//! Every float is written in shortest round-trip form, so reading a model
//! and writing it again reproduces the file byte for byte.

use std::path::Path;

use thiserror::Error;

use crate::ingest::{Activity, WindowConfig};
use crate::kv::{KvDoc, KvError};
use crate::svm::{LinearModel, OneVsAllModel, Sigmoid, Standardizer};
use crate::symptoms::{
    Decision, DetectorConfig, DetectorKind, FeatureRecipe, SymptomError, SymptomModel, TremorThresholds,
};

pub const FORMAT: &str = "pdwave-detector";
pub const VERSION: u32 = 1;
/// Acceleration unit the absolute energy features assume.
pub const UNIT: &str = "g";

const HEADER: &str = "# wavelet-energy symptom detector\n";

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Kv(#[from] KvError),
    #[error("not a detector model file (format `{0}`)")]
    Format(String),
    #[error("unsupported model file version {0} (this build reads version {VERSION})")]
    Version(u32),
    #[error("inconsistent model file: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Symptom(#[from] SymptomError),
}

fn class_key(class: u8, field: &str) -> String {
    format!("class.{class}.{field}")
}

pub fn model_to_kv(model: &SymptomModel) -> KvDoc {
    let cfg = &model.config;
    let mut doc = KvDoc::new();
    doc.set("format", FORMAT);
    doc.set("version", VERSION);
    doc.set("kind", model.kind);
    doc.set("activity", model.activity);
    doc.set("recipe", model.recipe.name());
    doc.set("unit", UNIT);
    doc.set("k", model.k);
    doc.set("feature_dim", model.recipe.dim(model.k));
    doc.set("features", model.recipe.feature_names(model.k).join(","));
    doc.set("wavelet_taps", cfg.wavelet_taps);
    doc.set_f64("window_seconds", cfg.window.window_seconds);
    doc.set_f64("overlap", cfg.window.overlap);
    doc.set_f64("rate_tolerance", cfg.window.rate_tolerance);
    doc.set_f64("svm_c", cfg.c);
    doc.set("seed", cfg.seed);
    doc.set("theta1", cfg.thresholds.theta1);
    doc.set("theta2", cfg.thresholds.theta2);
    doc.set("binary_threshold", cfg.binary_threshold);
    let classes: Vec<String> = model.svm.classes.iter().map(u8::to_string).collect();
    doc.set("classes", classes.join(","));
    for ((class, m), sig) in model.svm.classes.iter().zip(&model.svm.models).zip(&model.svm.calibration) {
        doc.set_f64s(&class_key(*class, "weights"), &m.weights);
        doc.set_f64(&class_key(*class, "bias"), m.bias);
        doc.set_f64s(&class_key(*class, "mean"), &m.standardizer.mean);
        doc.set_f64s(&class_key(*class, "scale"), &m.standardizer.scale);
        doc.set_f64(&class_key(*class, "sigmoid_a"), sig.a);
        doc.set_f64(&class_key(*class, "sigmoid_b"), sig.b);
    }
    doc
}

pub fn model_to_text(model: &SymptomModel) -> String {
    format!("{HEADER}{}", model_to_kv(model).to_text())
}

fn inconsistent(msg: impl Into<String>) -> ModelFileError {
    ModelFileError::Inconsistent(msg.into())
}

pub fn model_from_kv(doc: &KvDoc) -> Result<SymptomModel, ModelFileError> {
    let format = doc.require("format")?;
    if format != FORMAT {
        return Err(ModelFileError::Format(format.to_string()));
    }
    let version: u32 = doc.parse_value("version")?;
    if version != VERSION {
        return Err(ModelFileError::Version(version));
    }
    let kind: DetectorKind = doc
        .require("kind")?
        .parse()
        .map_err(inconsistent)?;
    let activity: Activity = doc.parse_value("activity")?;
    if activity != kind.activity() {
        return Err(inconsistent(format!("{kind} models apply to {} windows, file says {activity}", kind.activity())));
    }
    let recipe_name = doc.require("recipe")?;
    let recipe = FeatureRecipe::parse(recipe_name).ok_or_else(|| inconsistent(format!("unknown recipe `{recipe_name}`")))?;
    if recipe != kind.recipe() {
        return Err(inconsistent(format!("{kind} models use the `{}` recipe", kind.recipe().name())));
    }
    let unit = doc.require("unit")?;
    if unit != UNIT {
        return Err(inconsistent(format!("unsupported unit `{unit}`")));
    }
    let k: usize = doc.parse_value("k")?;
    let dim: usize = doc.parse_value("feature_dim")?;
    if dim != recipe.dim(k) {
        return Err(inconsistent(format!("feature_dim {dim} does not match k = {k}")));
    }
    let names: Vec<String> = doc.parse_list("features")?;
    if names != recipe.feature_names(k) {
        return Err(inconsistent("feature names do not match the recipe"));
    }

    let thresholds = TremorThresholds::new(doc.parse_value("theta1")?, doc.parse_value("theta2")?)?;
    let config = DetectorConfig {
        c: doc.parse_value("svm_c")?,
        seed: doc.parse_value("seed")?,
        thresholds,
        binary_threshold: doc.parse_value("binary_threshold")?,
        window: WindowConfig {
            window_seconds: doc.parse_value("window_seconds")?,
            overlap: doc.parse_value("overlap")?,
            rate_tolerance: doc.parse_value("rate_tolerance")?,
        },
        wavelet_taps: doc.parse_value("wavelet_taps")?,
    };

    let classes: Vec<u8> = doc.parse_list("classes")?;
    if classes != kind.classes() {
        return Err(inconsistent(format!("{kind} models have classes {:?}", kind.classes())));
    }
    let mut models = Vec::with_capacity(classes.len());
    let mut calibration = Vec::with_capacity(classes.len());
    for &class in &classes {
        let weights: Vec<f64> = doc.parse_list(&class_key(class, "weights"))?;
        let mean: Vec<f64> = doc.parse_list(&class_key(class, "mean"))?;
        let scale: Vec<f64> = doc.parse_list(&class_key(class, "scale"))?;
        if weights.len() != dim || mean.len() != dim || scale.len() != dim {
            return Err(inconsistent(format!("class {class} vectors must have {dim} entries")));
        }
        models.push(LinearModel {
            weights,
            bias: doc.parse_value(&class_key(class, "bias"))?,
            c: config.c,
            standardizer: Standardizer { mean, scale },
        });
        calibration.push(Sigmoid {
            a: doc.parse_value(&class_key(class, "sigmoid_a"))?,
            b: doc.parse_value(&class_key(class, "sigmoid_b"))?,
        });
    }

    let mut allowed: Vec<String> = [
        "format", "version", "kind", "activity", "recipe", "unit", "k", "feature_dim", "features",
        "wavelet_taps", "window_seconds", "overlap", "rate_tolerance", "svm_c", "seed", "theta1",
        "theta2", "binary_threshold", "classes",
    ]
    .map(String::from)
    .to_vec();
    for &class in &classes {
        for field in ["weights", "bias", "mean", "scale", "sigmoid_a", "sigmoid_b"] {
            allowed.push(class_key(class, field));
        }
    }
    let allowed: Vec<&str> = allowed.iter().map(String::as_str).collect();
    doc.check_keys(&allowed)?;

    let decision = if kind.is_binary() {
        Decision::Binary {
            threshold: config.binary_threshold,
        }
    } else {
        Decision::Tremor(thresholds)
    };
    Ok(SymptomModel {
        kind,
        svm: OneVsAllModel {
            classes,
            models,
            calibration,
        },
        decision,
        recipe,
        activity,
        k,
        config,
    })
}

pub fn model_from_text(text: &str) -> Result<SymptomModel, ModelFileError> {
    model_from_kv(&KvDoc::parse(text)?)
}

pub fn read_model(path: &Path) -> Result<SymptomModel, ModelFileError> {
    model_from_text(&std::fs::read_to_string(path)?)
}
