//! Box-constrained Levenberg-Marquardt with a caller-supplied Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub(crate) struct LsqOptions {
    pub max_iter: usize,
    /// Relative cost decrease below which the run stops.
    pub ftol: f64,
    /// Projected-gradient infinity norm below which the run stops.
    pub gtol: f64,
    /// Relative step size below which the run stops.
    pub xtol: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            ftol: 1e-15,
            gtol: 1e-14,
            xtol: 1e-14,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LsqResult {
    pub x: DVector<f64>,
    pub residuals: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    /// `½|r|²`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `½|r(x)|²` subject to `lower ≤ x` (entries may be `−∞`).
/// `model` returns the residual vector and its Jacobian.
pub(crate) fn solve<F>(mut x: DVector<f64>, lower: &[f64], opts: &LsqOptions, model: F) -> LsqResult
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    let n = x.len();
    for i in 0..n {
        x[i] = x[i].max(lower[i]);
    }
    let (mut r, mut jac) = model(&x);
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let g = jac.transpose() * &r;
        let a = jac.transpose() * &jac;
        // Parameters pinned at their bound with the gradient pushing outward stay fixed.
        let free: Vec<usize> = (0..n).filter(|&i| !(x[i] <= lower[i] && g[i] > 0.0)).collect();
        let pg = free.iter().map(|&i| g[i].abs()).fold(0.0, f64::max);
        if pg <= opts.gtol * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut improved = false;
        let mut small_step = false;
        for _ in 0..60 {
            let k = free.len();
            let mut m = DMatrix::zeros(k, k);
            let mut rhs = DVector::zeros(k);
            for (p, &i) in free.iter().enumerate() {
                rhs[p] = -g[i];
                for (q, &j) in free.iter().enumerate() {
                    m[(p, q)] = a[(i, j)];
                }
                m[(p, p)] += lambda * a[(i, i)].max(1e-12);
            }
            let Some(step) = m.cholesky().map(|c| c.solve(&rhs)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = x.clone();
            for (p, &i) in free.iter().enumerate() {
                trial[i] = (x[i] + step[p]).max(lower[i]);
            }
            let dx = (&trial - &x).norm();
            if dx <= opts.xtol * (x.norm() + opts.xtol) {
                small_step = true;
                break;
            }
            let (rt, jt) = model(&trial);
            let ct = 0.5 * rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                x = trial;
                r = rt;
                jac = jt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < opts.ftol {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if small_step || (!improved && lambda > 1e16) {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    LsqResult {
        x,
        residuals: r,
        jacobian: jac,
        cost,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_fit_and_bound() {
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 * (-0.7 * t).exp()).collect();
        let model = |x: &DVector<f64>| {
            let r = DVector::from_iterator(ts.len(), ts.iter().zip(&ys).map(|(t, y)| x[0] * (-x[1] * t).exp() - y));
            let j = DMatrix::from_fn(ts.len(), 2, |i, c| {
                let e = (-x[1] * ts[i]).exp();
                if c == 0 {
                    e
                } else {
                    -x[0] * ts[i] * e
                }
            });
            (r, j)
        };
        let res = solve(DVector::from_vec(vec![1.0, 0.1]), &[f64::NEG_INFINITY, 0.0], &LsqOptions::default(), model);
        assert!(res.converged);
        assert!((res.x[0] - 2.0).abs() < 1e-9 && (res.x[1] - 0.7).abs() < 1e-9);

        // Lower bound above the optimum pins the rate.
        let res = solve(DVector::from_vec(vec![1.0, 1.0]), &[f64::NEG_INFINITY, 1.0], &LsqOptions::default(), model);
        assert_eq!(res.x[1], 1.0);
    }
}
