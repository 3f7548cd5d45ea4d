use super::WaveletError;

/// Natural cubic spline through strictly increasing knots.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    // Second derivatives at the knots; zero at both ends.
    second: Vec<f64>,
}

impl NaturalSpline {
    pub fn fit(knots: &[f64], values: &[f64]) -> Result<Self, WaveletError> {
        let n = knots.len();
        if n != values.len() {
            return Err(WaveletError::LengthMismatch {
                signal: values.len(),
                timestamps: n,
            });
        }
        if n < 4 {
            return Err(WaveletError::TooShort(n));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(WaveletError::NonIncreasingKnots);
        }

        // Tridiagonal system for the interior second derivatives (Thomas algorithm).
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let h0 = knots[i + 1] - knots[i];
            let h1 = knots[i + 2] - knots[i + 1];
            diag[i] = 2.0 * (h0 + h1);
            upper[i] = h1;
            rhs[i] = 6.0
                * ((values[i + 2] - values[i + 1]) / h1 - (values[i + 1] - values[i]) / h0);
        }
        for i in 1..m {
            let lower = knots[i + 1] - knots[i];
            let factor = lower / diag[i - 1];
            diag[i] -= factor * upper[i - 1];
            rhs[i] -= factor * rhs[i - 1];
        }
        let mut second = vec![0.0; n];
        for i in (0..m).rev() {
            let next = if i + 1 < m { second[i + 2] } else { 0.0 };
            second[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
        }

        Ok(Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            second,
        })
    }

    fn eval_in(&self, seg: usize, t: f64) -> f64 {
        let (x0, x1) = (self.knots[seg], self.knots[seg + 1]);
        let (y0, y1) = (self.values[seg], self.values[seg + 1]);
        let (m0, m1) = (self.second[seg], self.second[seg + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
    }

    /// Evaluates at `t`, extrapolating with the end cubic outside the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let last = self.knots.len() - 2;
        let seg = match self.knots.partition_point(|&k| k <= t) {
            0 => 0,
            p => (p - 1).min(last),
        };
        self.eval_in(seg, t)
    }

    /// Evaluates at `count` equally spaced points spanning the knot range.
    pub fn eval_uniform(&self, count: usize) -> Vec<f64> {
        let first = self.knots[0];
        let last = *self.knots.last().expect("non-empty");
        let step = if count > 1 {
            (last - first) / (count - 1) as f64
        } else {
            0.0
        };
        let mut out = Vec::with_capacity(count);
        let mut seg = 0;
        let top = self.knots.len() - 2;
        for i in 0..count {
            let t = if i + 1 == count { last } else { first + step * i as f64 };
            while seg < top && self.knots[seg + 1] <= t {
                seg += 1;
            }
            out.push(self.eval_in(seg, t));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots() {
        let knots = [0.0, 0.3, 1.1, 1.2, 2.0];
        let values = [1.0, -2.0, 0.5, 0.7, 3.0];
        let s = NaturalSpline::fit(&knots, &values).unwrap();
        for (k, v) in knots.iter().zip(values) {
            assert!((s.eval(*k) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn natural_end_conditions() {
        let knots: Vec<f64> = (0..7).map(|i| i as f64 * 0.5).collect();
        let values: Vec<f64> = knots.iter().map(|t| t.sin()).collect();
        let s = NaturalSpline::fit(&knots, &values).unwrap();
        assert_eq!(s.second[0], 0.0);
        assert_eq!(*s.second.last().unwrap(), 0.0);
        // Central differences of the second derivative near the ends.
        let h = 1e-4;
        let d2 = |t: f64| (s.eval(t + h) - 2.0 * s.eval(t) + s.eval(t - h)) / (h * h);
        assert!(d2(h).abs() < 1e-2);
        assert!(d2(3.0 - h).abs() < 1e-2);
    }

    #[test]
    fn matches_dense_solve() {
        // Independent check: assemble the full system and solve by Gaussian elimination.
        let knots = [0.0, 0.4, 0.9, 1.0, 1.8, 2.5];
        let values = [0.3, 1.0, -0.4, 0.2, 0.9, -1.0];
        let n = knots.len();
        let mut a = vec![vec![0.0f64; n]; n];
        let mut b = vec![0.0; n];
        a[0][0] = 1.0;
        a[n - 1][n - 1] = 1.0;
        for i in 1..n - 1 {
            let h0 = knots[i] - knots[i - 1];
            let h1 = knots[i + 1] - knots[i];
            a[i][i - 1] = h0;
            a[i][i] = 2.0 * (h0 + h1);
            a[i][i + 1] = h1;
            b[i] = 6.0 * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
        }
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
        let mut m = vec![0.0; n];
        for row in (0..n).rev() {
            let tail: f64 = (row + 1..n).map(|c| a[row][c] * m[c]).sum();
            m[row] = (b[row] - tail) / a[row][row];
        }
        let s = NaturalSpline::fit(&knots, &values).unwrap();
        for (x, y) in s.second.iter().zip(&m) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            NaturalSpline::fit(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(WaveletError::TooShort(3))
        ));
        assert!(matches!(
            NaturalSpline::fit(&[0.0, 1.0, 1.0, 2.0], &[1.0; 4]),
            Err(WaveletError::NonIncreasingKnots)
        ));
    }
}
