//! Wavelet-energy symptom detection for wrist-worn accelerometer recordings.
//!
//! The pipeline cuts labeled windows out of tri-axial recordings
//! ([`ingest`]), decomposes each axis with a periodic Daubechies DWT
//! ([`wavelet`]), turns the per-scale energies into feature vectors
//! ([`features`]) and classifies them with linear SVMs ([`svm`],
//! [`symptoms`]). [`eval`] runs leave-one-patient-out evaluation and
//! [`synth`] generates labeled synthetic cohorts. [`modelfile`] stores trained
//! detectors and [`cli`] backs the `pdwave` binary.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod features;
pub mod ingest;
pub mod kv;
pub mod modelfile;
pub mod svm;
pub mod cli;
pub mod eval;
pub mod symptoms;
pub mod synth;
pub mod wavelet;
