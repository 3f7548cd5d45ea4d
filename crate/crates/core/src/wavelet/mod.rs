//! Power-of-two resampling and the periodic pyramidal Daubechies DWT.
//!
//! Detail level 1 is the finest scale: for a signal sampled at `fs`, level
//! `j` covers roughly the band `(fs / 2^(j+1), fs / 2^j)`. A length-`2^k`
//! signal decomposes fully into `k` detail levels plus one approximation
//! coefficient, and the transform is orthonormal so energy is preserved.

mod filters;
mod spline;

pub use filters::Wavelet;
pub use spline::NaturalSpline;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveletError {
    #[error("signal length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("signal has {0} samples; at least 4 are needed for spline resampling")]
    TooShort(usize),
    #[error("signal has {signal} samples but {timestamps} timestamps")]
    LengthMismatch { signal: usize, timestamps: usize },
    #[error("timestamps must be strictly increasing")]
    NonIncreasingKnots,
    #[error("unsupported Daubechies order: {0} taps (expected 2, 4, 6 or 8)")]
    UnsupportedOrder(usize),
    #[error("detail level {level} has {found} coefficients, expected {expected}")]
    InconsistentLevels {
        level: usize,
        found: usize,
        expected: usize,
    },
}

/// Full pyramidal decomposition of a length-`2^k` signal.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    /// `details[j - 1]` holds level `j`, with `2^(k - j)` coefficients.
    pub details: Vec<Vec<f64>>,
    pub approximation: f64,
}

impl WaveletCoeffs {
    /// Number of detail scales `k`.
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    pub fn level(&self, j: usize) -> &[f64] {
        &self.details[j - 1]
    }

    fn validate(&self) -> Result<(), WaveletError> {
        let k = self.details.len();
        for (idx, d) in self.details.iter().enumerate() {
            let expected = 1usize << (k - idx - 1);
            if d.len() != expected {
                return Err(WaveletError::InconsistentLevels {
                    level: idx + 1,
                    found: d.len(),
                    expected,
                });
            }
        }
        Ok(())
    }
}

/// Per-level detail energies plus the approximation energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEnergies {
    /// `cont[j - 1]` is the summed squared detail coefficients at level `j`.
    pub cont: Vec<f64>,
    pub approx_energy: f64,
}

impl ScaleEnergies {
    pub fn total(&self) -> f64 {
        self.cont.iter().sum::<f64>() + self.approx_energy
    }
}

/// Smallest `k` with `n <= 2^k`.
pub fn pow2_exponent(n: usize) -> usize {
    n.next_power_of_two().trailing_zeros() as usize
}

/// Resamples `signal` (taken at `timestamps`) onto `2^k` equally spaced
/// points over the same time span using a natural cubic spline. Inputs whose
/// length is already a power of two are returned unchanged.
pub fn resample_to_pow2(signal: &[f64], timestamps: &[f64]) -> Result<Vec<f64>, WaveletError> {
    let n = signal.len();
    if n != timestamps.len() {
        return Err(WaveletError::LengthMismatch {
            signal: n,
            timestamps: timestamps.len(),
        });
    }
    if n < 4 {
        return Err(WaveletError::TooShort(n));
    }
    if n.is_power_of_two() {
        return Ok(signal.to_vec());
    }
    let spline = NaturalSpline::fit(timestamps, signal)?;
    Ok(spline.eval_uniform(n.next_power_of_two()))
}

fn analysis_step(input: &[f64], wavelet: &Wavelet) -> (Vec<f64>, Vec<f64>) {
    let n = input.len();
    let half = n / 2;
    let (h, g) = (wavelet.lowpass(), wavelet.highpass());
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for i in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for (tap, (hc, gc)) in h.iter().zip(g).enumerate() {
            let x = input[(2 * i + tap) % n];
            a += hc * x;
            d += gc * x;
        }
        approx[i] = a;
        detail[i] = d;
    }
    (approx, detail)
}

fn synthesis_step(approx: &[f64], detail: &[f64], wavelet: &Wavelet) -> Vec<f64> {
    let half = approx.len();
    let n = 2 * half;
    let (h, g) = (wavelet.lowpass(), wavelet.highpass());
    let mut out = vec![0.0; n];
    for i in 0..half {
        for (tap, (hc, gc)) in h.iter().zip(g).enumerate() {
            out[(2 * i + tap) % n] += hc * approx[i] + gc * detail[i];
        }
    }
    out
}

/// Full-depth periodic DWT.
pub fn dwt_forward(signal: &[f64], wavelet: &Wavelet) -> Result<WaveletCoeffs, WaveletError> {
    let n = signal.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(WaveletError::NotPowerOfTwo(n));
    }
    let mut details = Vec::with_capacity(pow2_exponent(n));
    let mut current = signal.to_vec();
    while current.len() > 1 {
        let (approx, detail) = analysis_step(&current, wavelet);
        details.push(detail);
        current = approx;
    }
    Ok(WaveletCoeffs {
        details,
        approximation: current[0],
    })
}

pub fn dwt_inverse(coeffs: &WaveletCoeffs, wavelet: &Wavelet) -> Result<Vec<f64>, WaveletError> {
    coeffs.validate()?;
    let mut current = vec![coeffs.approximation];
    for detail in coeffs.details.iter().rev() {
        current = synthesis_step(&current, detail, wavelet);
    }
    Ok(current)
}

pub fn scale_energies(coeffs: &WaveletCoeffs) -> ScaleEnergies {
    ScaleEnergies {
        cont: coeffs
            .details
            .iter()
            .map(|d| d.iter().map(|c| c * c).sum())
            .collect(),
        approx_energy: coeffs.approximation * coeffs.approximation,
    }
}

/// Detail level whose nominal band `(fs / 2^(j+1), fs / 2^j)` contains `freq`.
pub fn band_level(freq: f64, fs: f64) -> usize {
    assert!(freq > 0.0 && freq < fs / 2.0, "frequency outside (0, fs/2)");
    (fs / freq).log2().floor() as usize
}
