//! Associated Laguerre polynomials and the Debye-Waller style matrix-element factors.

/// `L_n^{(α)}(x)` by the upward three-term recurrence.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// All of `L_0^{(α)}(x), …, L_{n_max}^{(α)}(x)`.
pub fn laguerre_table(n_max: usize, alpha: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    if n_max == 0 {
        return out;
    }
    out.push(1.0 + alpha - x);
    for k in 1..n_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * out[k] - (kf + alpha) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// `f(n) = e^{−η²/2} L_n^{(1)}(η²)/(n+1)`, the number-dependent sideband coupling factor.
pub fn laguerre_f(n: usize, eta: f64) -> f64 {
    let x = eta * eta;
    (-0.5 * x).exp() * laguerre(n, 1.0, x) / (n as f64 + 1.0)
}

/// `B(n) = e^{−η²/2} L_n(η²)`, the carrier-like factor of a spectator mode.
pub fn spectator_b(n: usize, eta: f64) -> f64 {
    let x = eta * eta;
    (-0.5 * x).exp() * laguerre(n, 0.0, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    // Explicit sum Σ_k (−1)^k C(n+α, n−k) x^k / k! for integer α.
    fn laguerre_sum(n: usize, alpha: usize, x: f64) -> f64 {
        (0..=n)
            .map(|k| {
                let binom = factorial(n + alpha) / (factorial(n - k) * factorial(alpha + k));
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * binom * x.powi(k as i32) / factorial(k)
            })
            .sum()
    }

    #[test]
    fn examples() {
        let eta = 0.1f64;
        assert_abs_diff_eq!(laguerre_f(0, eta), (-0.005f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(laguerre_f(1, eta), (-0.005f64).exp() * 1.99 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(laguerre_f(1, eta), 0.990037, epsilon = 1e-6);
        assert_abs_diff_eq!(spectator_b(0, 0.087), (-0.087f64 * 0.087 / 2.0).exp(), epsilon = 1e-15);
    }

    #[test]
    fn table_matches_pointwise() {
        let t = laguerre_table(20, 1.0, 0.3);
        for (n, v) in t.iter().enumerate() {
            assert_abs_diff_eq!(*v, laguerre(n, 1.0, 0.3), epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn recurrence_matches_explicit_sum(n in 0usize..15, alpha in 0usize..3, x in 0.0f64..1.0) {
            let a = laguerre(n, alpha as f64, x);
            let b = laguerre_sum(n, alpha, x);
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }

        #[test]
        fn factors_approach_one(n in 0usize..12) {
            prop_assert!((laguerre_f(n, 1e-6) - 1.0).abs() < 1e-9);
            prop_assert!((spectator_b(n, 1e-6) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn factors_in_unit_interval(n in 0usize..8, eta in 0.0f64..0.15) {
            let f = laguerre_f(n, eta);
            let b = spectator_b(n, eta);
            prop_assert!(f > 0.0 && f <= 1.0);
            prop_assert!(b > 0.0 && b <= 1.0);
        }
    }
}
