//! Scale-energy features per axis.
//!
//! For each axis the absolute detail energies (`cont`) and their normalized
//! form (`rel`) are kept, together with the axis-averaged `rel` and the
//! walking axis ratio `w`. Vectors are ordered by detail level, finest first.

use std::fmt::Write as _;

use thiserror::Error;

use crate::ingest::Window;
use crate::wavelet::{dwt_forward, scale_energies, Wavelet, WaveletError};

pub const DEFAULT_EPS: f64 = 1e-12;
pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("negative energy {value} at level {level}")]
    NegativeEnergy { level: usize, value: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// Indexed by axis (x, y, z).
    pub cont: [Vec<f64>; 3],
    pub rel: [Vec<f64>; 3],
    pub rel_avg: Vec<f64>,
    /// Ratio features with the dominant axis in the denominator.
    pub w: Vec<f64>,
    /// Axis with the largest total detail energy.
    pub dominant_axis: usize,
    /// Set when at least one axis had zero detail energy.
    pub degenerate: bool,
}

impl FeatureVector {
    pub fn k(&self) -> usize {
        self.rel_avg.len()
    }

    /// Axis-averaged absolute energies.
    pub fn cont_avg(&self) -> Vec<f64> {
        (0..self.k())
            .map(|j| (self.cont[0][j] + self.cont[1][j] + self.cont[2][j]) / 3.0)
            .collect()
    }
}

/// `rel_j = cont_j / sum(cont)`; an all-zero input maps to the uniform vector.
pub fn relative_energies(cont: &[f64]) -> Result<Vec<f64>, FeatureError> {
    if let Some((level, &value)) = cont.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(FeatureError::NegativeEnergy {
            level: level + 1,
            value,
        });
    }
    let total: f64 = cont.iter().sum();
    if total == 0.0 {
        let k = cont.len() as f64;
        return Ok(vec![1.0 / k; cont.len()]);
    }
    Ok(cont.iter().map(|c| c / total).collect())
}

pub fn mean_relative(rel_x: &[f64], rel_y: &[f64], rel_z: &[f64]) -> Result<Vec<f64>, FeatureError> {
    if rel_x.len() != rel_y.len() {
        return Err(FeatureError::LengthMismatch(rel_x.len(), rel_y.len()));
    }
    if rel_x.len() != rel_z.len() {
        return Err(FeatureError::LengthMismatch(rel_x.len(), rel_z.len()));
    }
    Ok(rel_x
        .iter()
        .zip(rel_y)
        .zip(rel_z)
        .map(|((a, b), c)| (a + b + c) / 3.0)
        .collect())
}

/// `w_i = cont_y[i] * cont_z[i] / max(cont_x[i], eps)`.
pub fn walking_axis_ratio(cont_x: &[f64], cont_y: &[f64], cont_z: &[f64], eps: f64) -> Vec<f64> {
    cont_x
        .iter()
        .zip(cont_y)
        .zip(cont_z)
        .map(|((x, y), z)| y * z / x.max(eps))
        .collect()
}

/// Index of the axis with the largest summed energy; ties go to the lower index.
pub fn dominant_axis(cont: &[Vec<f64>; 3]) -> usize {
    let totals: Vec<f64> = cont.iter().map(|c| c.iter().sum()).collect();
    let mut best = 0;
    for a in 1..3 {
        if totals[a] > totals[best] {
            best = a;
        }
    }
    best
}

pub fn axis_energies(signal: &[f64], wavelet: &Wavelet) -> Result<Vec<f64>, FeatureError> {
    Ok(scale_energies(&dwt_forward(signal, wavelet)?).cont)
}

/// Features for one resampled window.
pub fn build_feature_vector(window: &Window, wavelet: &Wavelet) -> Result<FeatureVector, FeatureError> {
    let [x, y, z] = window.axes();
    let cont = [
        axis_energies(x, wavelet)?,
        axis_energies(y, wavelet)?,
        axis_energies(z, wavelet)?,
    ];
    let degenerate = cont.iter().any(|c| c.iter().all(|v| *v == 0.0));
    let rel = [
        relative_energies(&cont[0])?,
        relative_energies(&cont[1])?,
        relative_energies(&cont[2])?,
    ];
    let rel_avg = mean_relative(&rel[0], &rel[1], &rel[2])?;
    let dom = dominant_axis(&cont);
    let (o1, o2) = ((dom + 1) % 3, (dom + 2) % 3);
    let w = walking_axis_ratio(&cont[dom], &cont[o1], &cont[o2], DEFAULT_EPS);
    Ok(FeatureVector {
        cont,
        rel,
        rel_avg,
        w,
        dominant_axis: dom,
        degenerate,
    })
}

/// Header for the feature matrix CSV export.
pub fn feature_csv_header(k: usize) -> String {
    let mut cols: Vec<String> = [
        "patient_id",
        "activity",
        "tremor",
        "dyskinesia",
        "bradykinesia",
        "window_start",
        "window_end",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for axis in AXIS_NAMES {
        cols.extend((1..=k).map(|j| format!("cont_{axis}_{j}")));
        cols.extend((1..=k).map(|j| format!("rel_{axis}_{j}")));
    }
    cols.extend((1..=k).map(|j| format!("rel_avg_{j}")));
    cols.extend((1..=k).map(|j| format!("w_{j}")));
    cols.join(",")
}

pub fn feature_csv_row(window: &Window, f: &FeatureVector) -> String {
    let mut row = format!(
        "{},{},{},{},{},{:?},{:?}",
        window.patient_id,
        window.activity,
        window.labels.tremor,
        window.labels.dyskinesia,
        window.labels.bradykinesia,
        window.start,
        window.end
    );
    let blocks = (0..3)
        .flat_map(|a| [&f.cont[a], &f.rel[a]])
        .chain([&f.rel_avg, &f.w]);
    for block in blocks {
        for v in block {
            let _ = write!(row, ",{v:?}");
        }
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Activity, SymptomLabels};
    use proptest::prelude::*;

    fn window(x: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> Window {
        Window {
            patient_id: "p".into(),
            activity: Activity::Resting,
            labels: SymptomLabels::default(),
            x,
            y,
            z,
            start: 0.0,
            end: 10.0,
        }
    }

    #[test]
    fn relative_energy_examples() {
        let mut cont = vec![0.0; 9];
        cont[2] = 4.0;
        let mut expected = vec![0.0; 9];
        expected[2] = 1.0;
        assert_eq!(relative_energies(&cont).unwrap(), expected);
        assert_eq!(relative_energies(&[2.5; 9]).unwrap(), vec![1.0 / 9.0; 9]);
        assert_eq!(relative_energies(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(relative_energies(&[0.0; 4]).unwrap(), vec![0.25; 4]);
        assert!(matches!(
            relative_energies(&[1.0, -0.5]),
            Err(FeatureError::NegativeEnergy { level: 2, .. })
        ));
    }

    #[test]
    fn mean_relative_examples() {
        let r = [0.2, 0.3, 0.5];
        let same = mean_relative(&r, &r, &r).unwrap();
        assert!(same.iter().zip(r).all(|(a, b)| (a - b).abs() < 1e-15));
        let m = mean_relative(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert!((m[0] - 1.0 / 3.0).abs() < 1e-15 && (m[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(mean_relative(&[1.0], &[0.0, 1.0], &[1.0]).is_err());
    }

    #[test]
    fn walking_ratio_examples() {
        assert_eq!(walking_axis_ratio(&[4.0], &[2.0], &[6.0], DEFAULT_EPS), vec![3.0]);
        assert_eq!(
            walking_axis_ratio(&[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0], DEFAULT_EPS),
            vec![0.0, 0.0]
        );
        let e = [0.7, 1.3, 2.0];
        assert_eq!(walking_axis_ratio(&e, &e, &e, DEFAULT_EPS), e.to_vec());
        // Zero x energy hits the floor instead of dividing by zero.
        assert_eq!(walking_axis_ratio(&[0.0], &[1e-6], &[1e-6], DEFAULT_EPS), vec![1.0]);
    }

    #[test]
    fn zero_window_is_degenerate() {
        let f = build_feature_vector(
            &window(vec![0.0; 512], vec![0.0; 512], vec![0.0; 512]),
            &Wavelet::default(),
        )
        .unwrap();
        assert_eq!(f.k(), 9);
        assert!(f.degenerate);
        for a in 0..3 {
            assert_eq!(f.cont[a], vec![0.0; 9]);
            assert_eq!(f.rel[a], vec![1.0 / 9.0; 9]);
        }
        assert_eq!(f.w, vec![0.0; 9]);
    }

    #[test]
    fn per_axis_feature_count_is_2k() {
        let s: Vec<f64> = (0..512).map(|i| (i as f64 * 0.3).sin()).collect();
        let f = build_feature_vector(&window(s.clone(), s.clone(), s), &Wavelet::default()).unwrap();
        assert_eq!(f.cont[0].len() + f.rel[0].len(), 18);
        assert!(!f.degenerate);
    }

    #[test]
    fn five_hz_window_peaks_at_level_three() {
        let s: Vec<f64> = (0..512)
            .map(|i| 0.25 * (2.0 * std::f64::consts::PI * 5.0 * i as f64 / 50.0).sin())
            .collect();
        let f = build_feature_vector(&window(s, vec![0.0; 512], vec![0.0; 512]), &Wavelet::default())
            .unwrap();
        let argmax = f.rel[0]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax + 1, 3);
        assert_eq!(f.dominant_axis, 0);
    }

    #[test]
    fn csv_header_and_row_widths_agree() {
        let s: Vec<f64> = (0..64).map(|i| (i as f64).cos()).collect();
        let w = window(s.clone(), s.clone(), s);
        let f = build_feature_vector(&w, &Wavelet::default()).unwrap();
        let header = feature_csv_header(f.k());
        let row = feature_csv_row(&w, &f);
        assert_eq!(header.split(',').count(), row.split(',').count());
        assert!(header.contains("cont_x_1,cont_x_2"));
        assert!(header.ends_with("w_6"));
    }

    fn cont_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..100.0, 1..12)
    }

    proptest! {
        #[test]
        fn rel_is_normalized(cont in cont_vec()) {
            let rel = relative_energies(&cont).unwrap();
            let sum: f64 = rel.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(rel.iter().all(|r| *r >= 0.0 && r.is_finite()));
        }

        #[test]
        fn walking_ratio_symmetric_and_monotone(
            x in 0.0f64..10.0, y in 0.0f64..10.0, z in 0.0f64..10.0, dy in 0.0f64..5.0
        ) {
            let a = walking_axis_ratio(&[x], &[y], &[z], DEFAULT_EPS);
            let b = walking_axis_ratio(&[x], &[z], &[y], DEFAULT_EPS);
            prop_assert_eq!(&a, &b);
            let c = walking_axis_ratio(&[x], &[y + dy], &[z], DEFAULT_EPS);
            prop_assert!(c[0] >= a[0]);
        }
    }
}
