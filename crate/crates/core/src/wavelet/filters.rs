use super::WaveletError;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

// Daubechies scaling filters, normalized so that sum(h) = sqrt(2).
const DB6: [f64; 6] = [
    0.332_670_552_950_082_6,
    0.806_891_509_311_092_5,
    0.459_877_502_118_491_5,
    -0.135_011_020_010_254_6,
    -0.085_441_273_882_026_7,
    0.035_226_291_885_709_5,
];

const DB8: [f64; 8] = [
    0.230_377_813_308_896_4,
    0.714_846_570_552_915_4,
    0.630_880_767_929_858_7,
    -0.027_983_769_416_859_9,
    -0.187_034_811_719_093_1,
    0.030_841_381_835_560_7,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_0,
];

/// Orthonormal Daubechies filter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavelet {
    taps: usize,
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
}

impl Default for Wavelet {
    fn default() -> Self {
        Self::daubechies(4).expect("4-tap filter is built in")
    }
}

impl Wavelet {
    /// Daubechies filter with `taps` coefficients (2 = Haar, 4, 6 or 8).
    pub fn daubechies(taps: usize) -> Result<Self, WaveletError> {
        let lowpass: Vec<f64> = match taps {
            2 => vec![1.0 / SQRT_2, 1.0 / SQRT_2],
            4 => {
                let s3 = 3f64.sqrt();
                let norm = 4.0 * SQRT_2;
                vec![
                    (1.0 + s3) / norm,
                    (3.0 + s3) / norm,
                    (3.0 - s3) / norm,
                    (1.0 - s3) / norm,
                ]
            }
            6 => DB6.to_vec(),
            8 => DB8.to_vec(),
            other => return Err(WaveletError::UnsupportedOrder(other)),
        };
        // Quadrature mirror: g[n] = (-1)^n h[L-1-n].
        let highpass = (0..taps)
            .map(|n| {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[taps - 1 - n]
            })
            .collect();
        Ok(Self {
            taps,
            lowpass,
            highpass,
        })
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_are_orthonormal() {
        for taps in [2, 4, 6, 8] {
            let w = Wavelet::daubechies(taps).unwrap();
            let h = w.lowpass();
            let g = w.highpass();
            let sum: f64 = h.iter().sum();
            assert!((sum - SQRT_2).abs() < 1e-12, "taps {taps}: sum {sum}");
            // Double-shift orthogonality of h with itself and with g.
            for shift in (0..taps).step_by(2) {
                let hh: f64 = (0..taps - shift).map(|n| h[n] * h[n + shift]).sum();
                let hg: f64 = (0..taps - shift).map(|n| h[n] * g[n + shift]).sum();
                let gh: f64 = (0..taps - shift).map(|n| g[n] * h[n + shift]).sum();
                let expected = if shift == 0 { 1.0 } else { 0.0 };
                assert!((hh - expected).abs() < 1e-12, "taps {taps} shift {shift}: {hh}");
                assert!(hg.abs() < 1e-12 && gh.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn highpass_annihilates_low_degree_polynomials() {
        // A p-tap Daubechies filter has p/2 vanishing moments.
        for taps in [2, 4, 6, 8] {
            let g = Wavelet::daubechies(taps).unwrap().highpass().to_vec();
            for moment in 0..taps / 2 {
                let m: f64 = g
                    .iter()
                    .enumerate()
                    .map(|(n, c)| c * (n as f64).powi(moment as i32))
                    .sum();
                assert!(m.abs() < 1e-9, "taps {taps} moment {moment}: {m}");
            }
        }
    }

    #[test]
    fn odd_or_unknown_orders_rejected() {
        assert!(matches!(
            Wavelet::daubechies(5),
            Err(WaveletError::UnsupportedOrder(5))
        ));
        assert!(Wavelet::daubechies(0).is_err());
    }
}
