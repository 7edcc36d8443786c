use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Spin, SpinMotionState, NUMERICAL_FLOOR};

/// Poisson photon-count readout with two thresholds: `count ≤ threshold_pass`
/// decides the filter, `count ≤ threshold_discriminate` the state assignment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    pub lambda_bright: f64,
    pub lambda_dark: f64,
    pub threshold_pass: u64,
    pub threshold_discriminate: u64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self {
            lambda_bright: 5.0,
            lambda_dark: 0.05,
            threshold_pass: 0,
            threshold_discriminate: 1,
        }
    }
}

/// `P(N ≤ k)` for `N ~ Poisson(λ)`.
pub fn poisson_cdf(lambda: f64, k: u64) -> f64 {
    if lambda.is_infinite() {
        return 0.0;
    }
    if lambda == 0.0 {
        return 1.0;
    }
    let mut term = (-lambda).exp();
    let mut sum = term;
    for i in 1..=k {
        term *= lambda / i as f64;
        sum += term;
    }
    sum.min(1.0)
}

impl DetectionModel {
    pub fn new(lambda_bright: f64, lambda_dark: f64, threshold_pass: u64, threshold_discriminate: u64) -> Result<Self> {
        if !(lambda_dark >= 0.0 && lambda_bright > lambda_dark) || lambda_dark.is_infinite() {
            return Err(Error::invalid(format!(
                "need lambda_bright > lambda_dark >= 0, got {lambda_bright} and {lambda_dark}"
            )));
        }
        Ok(Self {
            lambda_bright,
            lambda_dark,
            threshold_pass,
            threshold_discriminate,
        })
    }

    /// No dark counts and an unbounded bright count.
    pub fn perfect() -> Self {
        Self {
            lambda_bright: f64::INFINITY,
            lambda_dark: 0.0,
            ..Self::default()
        }
    }

    fn lambda(&self, spin: Spin) -> f64 {
        match spin {
            Spin::Up => self.lambda_bright,
            Spin::Down => self.lambda_dark,
        }
    }

    pub fn sample_count<R: Rng + ?Sized>(&self, spin: Spin, rng: &mut R) -> u64 {
        let l = self.lambda(spin);
        if l.is_infinite() {
            return u64::MAX;
        }
        if l == 0.0 {
            return 0;
        }
        Poisson::new(l).expect("positive finite mean").sample(rng) as u64
    }

    /// Probability that `spin` is read as dark under the pass threshold.
    pub fn p_pass(&self, spin: Spin) -> f64 {
        poisson_cdf(self.lambda(spin), self.threshold_pass)
    }

    /// Probability that `spin` is read as dark under the discrimination threshold.
    pub fn p_dark(&self, spin: Spin) -> f64 {
        poisson_cdf(self.lambda(spin), self.threshold_discriminate)
    }
}

#[derive(Clone, Debug)]
pub struct Detection {
    /// Photon count per ion.
    pub counts: Vec<u64>,
    /// Projected spin per ion.
    pub spins: Vec<Spin>,
    /// Normalized post-measurement state.
    pub state: SpinMotionState,
}

impl Detection {
    /// All ions below the pass threshold.
    pub fn passes(&self, model: &DetectionModel) -> bool {
        self.counts.iter().all(|&c| c <= model.threshold_pass)
    }

    /// All ions read dark under the discrimination threshold.
    pub fn reads_dark(&self, model: &DetectionModel) -> bool {
        self.counts.iter().all(|&c| c <= model.threshold_discriminate)
    }
}

/// Projectively measures every ion (Born rule), samples photon counts and
/// returns the renormalized conditional state.
pub fn detect_spin<R: Rng + ?Sized>(state: &SpinMotionState, model: &DetectionModel, rng: &mut R) -> Result<Detection> {
    let mut current = state.normalized()?;
    let n = current.space().spin_count();
    let mut spins = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    for ion in 0..n {
        let (p_down, down) = current.project_spin(ion, Spin::Down);
        let spin = if rng.random::<f64>() < p_down { Spin::Down } else { Spin::Up };
        let branch = match spin {
            Spin::Down => down,
            Spin::Up => current.project_spin(ion, Spin::Up).1,
        };
        if branch.norm_sqr() < NUMERICAL_FLOOR {
            return Err(Error::Numerical(format!("ion {ion}: sampled a branch of vanishing weight")));
        }
        current = branch.normalized()?;
        counts.push(model.sample_count(spin, rng));
        spins.push(spin);
    }
    Ok(Detection {
        counts,
        spins,
        state: current,
    })
}

/// Re-prepares every ion in |↓⟩ after a readout, leaving the motion intact.
/// The state must be a spin product state (as after [`detect_spin`]).
pub fn reset_spins(state: &SpinMotionState, spins: &[Spin]) -> SpinMotionState {
    let flip = nalgebra::Matrix2::new(C64::from(0.0), C64::from(1.0), C64::from(1.0), C64::from(0.0));
    let mut out = state.clone();
    for (ion, s) in spins.iter().enumerate() {
        if *s == Spin::Up {
            out.apply_spin_operator(ion, &flip);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{fock_state, HilbertSpace};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn poisson_tails() {
        let m = DetectionModel::default();
        // P(count ≥ 2 | ↑) = 1 − 6e^{−5}.
        assert_abs_diff_eq!(1.0 - m.p_dark(Spin::Up), 1.0 - 6.0 * (-5.0f64).exp(), epsilon = 1e-12);
        assert!((1.0 - m.p_dark(Spin::Up) - 0.9596).abs() < 1e-4);
        let false_bright = 1.0 - m.p_dark(Spin::Down);
        assert!((false_bright - 0.0012).abs() < 1e-4 && false_bright < 0.01);
        let p = DetectionModel::perfect();
        assert_eq!(p.p_pass(Spin::Down), 1.0);
        assert_eq!(p.p_dark(Spin::Up), 0.0);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(DetectionModel::new(0.01, 0.05, 0, 1).is_err());
        assert!(DetectionModel::new(5.0, -0.1, 0, 1).is_err());
    }

    #[test]
    fn product_state_motion_untouched() {
        let s = HilbertSpace::new(&[5], 1).unwrap();
        let st = fock_state(&s, &[3], &[Spin::Down]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let d = detect_spin(&st, &DetectionModel::default(), &mut rng).unwrap();
            assert_eq!(d.spins, vec![Spin::Down]);
            assert_abs_diff_eq!(d.state.populations().get(&[3]), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn reset_returns_to_dark() {
        let s = HilbertSpace::new(&[3], 2).unwrap();
        let st = fock_state(&s, &[1], &[Spin::Up, Spin::Down]).unwrap();
        let r = reset_spins(&st, &[Spin::Up, Spin::Down]);
        assert_abs_diff_eq!(r.spin_probability(0, Spin::Down), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.spin_probability(1, Spin::Down), 1.0, epsilon = 1e-14);
    }
}
