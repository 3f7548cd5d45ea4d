//! Sequential minimal optimization for the linear soft-margin SVM dual
//!
//!   min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0
//!
//! with `Q_ij = y_i y_j <x_i, x_j>`. Working pairs are chosen with the
//! second-order rule of Fan, Chen and Lin (2005). The solver stops once the
//! primal-dual gap drops below the requested tolerance.

use log::debug;

const TAU: f64 = 1e-12;
// Gram matrices above this many rows are not cached.
const GRAM_CACHE_LIMIT: usize = 3000;
const HISTORY_EVERY: usize = 64;

#[derive(Debug, Clone)]
pub struct SmoParams {
    pub c: f64,
    pub gap_tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Primal weights `sum_i a_i y_i x_i`.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
    /// Dual objective (maximization form) sampled during the run.
    pub dual_history: Vec<f64>,
    pub converged: bool,
}

impl SmoSolution {
    pub fn duality_gap(&self) -> f64 {
        self.primal - self.dual
    }
}

enum Kernel<'a> {
    Cached(Vec<Vec<f64>>),
    Direct(&'a [Vec<f64>]),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Kernel<'a> {
    fn new(x: &'a [Vec<f64>]) -> Self {
        if x.len() > GRAM_CACHE_LIMIT {
            return Kernel::Direct(x);
        }
        let n = x.len();
        let mut gram = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = dot(&x[i], &x[j]);
                gram[i][j] = v;
                gram[j][i] = v;
            }
        }
        Kernel::Cached(gram)
    }

    fn row(&self, i: usize) -> std::borrow::Cow<'_, [f64]> {
        match self {
            Kernel::Cached(g) => std::borrow::Cow::Borrowed(&g[i]),
            Kernel::Direct(x) => std::borrow::Cow::Owned(x.iter().map(|r| dot(&x[i], r)).collect()),
        }
    }

    fn diag(&self, i: usize) -> f64 {
        match self {
            Kernel::Cached(g) => g[i][i],
            Kernel::Direct(x) => dot(&x[i], &x[i]),
        }
    }
}

struct State<'a> {
    y: &'a [f64],
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl State<'_> {
    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] < 0.0 && self.alpha[t] < self.c) || (self.y[t] > 0.0 && self.alpha[t] > 0.0)
    }

    /// Dual objective in maximization form: e'a - 1/2 a'Qa.
    fn dual(&self) -> f64 {
        // a'Qa = sum_t a_t (G_t + 1)
        self.alpha
            .iter()
            .zip(&self.grad)
            .map(|(a, g)| a - 0.5 * a * (g + 1.0))
            .sum()
    }

    /// Bias from the KKT conditions: mean over free vectors, else the
    /// midpoint of the feasible interval.
    fn bias(&self) -> f64 {
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum, mut free) = (0.0, 0usize);
        for t in 0..self.alpha.len() {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] >= self.c {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
        -rho
    }
}

/// Hinge loss sum for outputs `f + b`.
fn hinge(f: &[f64], y: &[f64], b: f64) -> f64 {
    f.iter()
        .zip(y)
        .map(|(fi, yi)| (1.0 - yi * (fi + b)).max(0.0))
        .sum()
}

/// Bias minimizing the hinge sum for fixed outputs `f`.
///
/// The loss is convex and piecewise linear in `b` with breakpoints
/// `y_t - f_t`; its slope starts at `-#positives` and rises by one at each
/// breakpoint, so the minimizer is the `#positives`-th smallest breakpoint.
pub fn optimal_bias(f: &[f64], y: &[f64]) -> f64 {
    let positives = y.iter().filter(|v| **v > 0.0).count();
    let mut breaks: Vec<f64> = f.iter().zip(y).map(|(fi, yi)| yi - fi).collect();
    breaks.sort_by(f64::total_cmp);
    breaks[positives.max(1) - 1]
}

pub fn solve(x: &[Vec<f64>], y: &[f64], params: &SmoParams) -> SmoSolution {
    let n = x.len();
    let dim = x.first().map_or(0, Vec::len);
    let kernel = Kernel::new(x);
    let mut st = State {
        y,
        c: params.c,
        alpha: vec![0.0; n],
        grad: vec![-1.0; n],
    };

    let mut kkt_eps = 1e-3;
    let mut iterations = 0;
    let mut dual_history = vec![st.dual()];
    let mut converged = false;

    let finish = |st: &State, iterations: usize, dual_history: Vec<f64>, converged: bool| {
        let mut weights = vec![0.0; dim];
        for t in 0..n {
            if st.alpha[t] != 0.0 {
                let coef = st.alpha[t] * y[t];
                for (w, v) in weights.iter_mut().zip(&x[t]) {
                    *w += coef * v;
                }
            }
        }
        let (primal, bias) = primal_with_bias(st, params.c);
        SmoSolution {
            alpha: st.alpha.clone(),
            weights,
            bias,
            iterations,
            primal,
            dual: st.dual(),
            dual_history,
            converged,
        }
    };

    while iterations < params.max_iterations {
        // Maximal violating i from I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if st.in_up(t) {
                let v = -y[t] * st.grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            if st.in_low(t) {
                gmin = gmin.min(-y[t] * st.grad[t]);
            }
        }

        if i_sel.is_none() || gmax - gmin < kkt_eps {
            let (primal, _) = primal_with_bias(&st, params.c);
            let gap = primal - st.dual();
            debug!("smo: iter {iterations} kkt {kkt_eps:e} gap {gap:e}");
            if gap <= params.gap_tolerance {
                converged = true;
                break;
            }
            if kkt_eps < 1e-14 {
                break;
            }
            kkt_eps /= 10.0;
            continue;
        }
        let i = i_sel.expect("checked above");
        let k_i = kernel.row(i);

        // Second-order choice of j from I_low.
        let mut best = f64::INFINITY;
        let mut j_sel = None;
        for t in 0..n {
            if !st.in_low(t) {
                continue;
            }
            let b = gmax + y[t] * st.grad[t];
            if b > 0.0 {
                let mut a = k_i[i] + kernel.diag(t) - 2.0 * k_i[t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
        let Some(j) = j_sel else {
            kkt_eps /= 10.0;
            continue;
        };
        let k_j = kernel.row(j);

        update_pair(&mut st, i, j, &k_i, &k_j);
        iterations += 1;
        if iterations % HISTORY_EVERY == 0 {
            dual_history.push(st.dual());
        }
    }
    dual_history.push(st.dual());
    finish(&st, iterations, dual_history, converged)
}

/// Analytic two-variable update (as in LIBSVM), followed by the gradient update.
fn update_pair(st: &mut State, i: usize, j: usize, k_i: &[f64], k_j: &[f64]) {
    let c = st.c;
    let y = st.y;
    let (old_ai, old_aj) = (st.alpha[i], st.alpha[j]);
    let quad = {
        let q = k_i[i] + k_j[j] - 2.0 * k_i[j];
        if q <= 0.0 {
            TAU
        } else {
            q
        }
    };
    let (gi, gj) = (st.grad[i], st.grad[j]);
    let (mut ai, mut aj) = (old_ai, old_aj);

    if y[i] != y[j] {
        let delta = (-gi - gj) / quad;
        let diff = ai - aj;
        ai += delta;
        aj += delta;
        if diff > 0.0 {
            if aj < 0.0 {
                aj = 0.0;
                ai = diff;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = -diff;
        }
        if diff > 0.0 {
            if ai > c {
                ai = c;
                aj = c - diff;
            }
        } else if aj > c {
            aj = c;
            ai = c + diff;
        }
    } else {
        let delta = (gi - gj) / quad;
        let sum = ai + aj;
        ai -= delta;
        aj += delta;
        if sum > c {
            if ai > c {
                ai = c;
                aj = sum - c;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > c {
            if aj > c {
                aj = c;
                ai = sum - c;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
    }

    st.alpha[i] = ai;
    st.alpha[j] = aj;
    let (di, dj) = (ai - old_ai, aj - old_aj);
    for t in 0..st.grad.len() {
        // Q_ti = y_t y_i K_ti
        st.grad[t] += y[t] * (y[i] * k_i[t] * di + y[j] * k_j[t] * dj);
    }
}

/// Primal objective at `w(a)`, using whichever of the KKT bias and the
/// hinge-optimal bias scores lower. Returns `(primal, bias)`.
fn primal_with_bias(st: &State, c: f64) -> (f64, f64) {
    let n = st.alpha.len();
    let mut w_norm2 = 0.0;
    let mut f = Vec::with_capacity(n);
    for t in 0..n {
        w_norm2 += st.alpha[t] * (st.grad[t] + 1.0);
        f.push(st.y[t] * (st.grad[t] + 1.0));
    }
    let half = 0.5 * w_norm2.max(0.0);
    let b_kkt = st.bias();
    let b_opt = optimal_bias(&f, st.y);
    let p_kkt = half + c * hinge(&f, st.y, b_kkt);
    let p_opt = half + c * hinge(&f, st.y, b_opt);
    if p_kkt <= p_opt {
        (p_kkt, b_kkt)
    } else {
        (p_opt, b_opt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SmoParams {
        SmoParams {
            c: 1.0,
            gap_tolerance: 1e-4,
            max_iterations: 1_000_000,
        }
    }

    #[test]
    fn two_points_hard_margin() {
        // Points (-1, 0) and (1, 0): max-margin w = (1, 0), b = 0, a = 0.5 each.
        let x = vec![vec![-1.0, 0.0], vec![1.0, 0.0]];
        let y = vec![-1.0, 1.0];
        let sol = solve(&x, &y, &SmoParams { c: 10.0, ..params() });
        assert!(sol.converged);
        assert!((sol.weights[0] - 1.0).abs() < 1e-9);
        assert!(sol.weights[1].abs() < 1e-12);
        assert!(sol.bias.abs() < 1e-9);
        assert!((sol.alpha[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn optimal_bias_minimizes_hinge() {
        let f = [0.3, -0.2, 1.5, -1.1, 0.05, 0.8];
        let y = [1.0, -1.0, 1.0, -1.0, -1.0, 1.0];
        let b = optimal_bias(&f, &y);
        let best = hinge(&f, &y, b);
        let mut t = -3.0;
        while t < 3.0 {
            assert!(hinge(&f, &y, t) >= best - 1e-12, "b = {t}");
            t += 0.001;
        }
    }

    #[test]
    fn overlapping_data_reaches_gap() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let a = i as f64 * 0.37;
                vec![a.sin() + if i % 2 == 0 { 0.4 } else { -0.4 }, a.cos()]
            })
            .collect();
        let y: Vec<f64> = (0..60).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let sol = solve(&x, &y, &params());
        assert!(sol.converged);
        assert!(sol.duality_gap() <= 1e-4 && sol.duality_gap() >= -1e-9);
        assert!(sol.dual_history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        let sum: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(sum.abs() < 1e-9);
        assert!(sol.alpha.iter().all(|a| (0.0..=1.0).contains(a)));
    }
}
