use serde::{Deserialize, Serialize};

use crate::dynamics::nonlinear_weight;
use crate::error::{Error, Result};
use crate::fock::FockDistribution;
use crate::protocol::RamseySpec;
use crate::special::spectator_b;

/// `P_↑ = ½ − ½ Σ_n p_n cos(θ·n)`.
pub fn pup_model_linear(populations: &FockDistribution, theta: &[f64]) -> f64 {
    0.5 - 0.5
        * populations
            .iter()
            .map(|(n, p)| p * (theta.iter().zip(n).map(|(t, &k)| t * k as f64).sum::<f64>()).cos())
            .sum::<f64>()
}

/// What the fit model needs to know about a Ramsey setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSetting {
    /// Lamb-Dicke parameter of each fitted mode.
    pub etas: Vec<f64>,
    /// `r = χ_eff,1/χ_eff,2`; `None` leaves every mode after the first undriven.
    pub ratio: Option<f64>,
    /// Use the Laguerre weights `S_j(n)`; otherwise `2n_j + 1`.
    pub nonlinear: bool,
}

impl FitSetting {
    pub fn new(etas: Vec<f64>, ratio: Option<f64>, nonlinear: bool) -> Result<Self> {
        if etas.is_empty() || etas.iter().any(|e| !(*e >= 0.0 && *e < 1.0)) {
            return Err(Error::invalid("one Lamb-Dicke parameter in [0, 1) per fitted mode required"));
        }
        if let Some(r) = ratio {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!("ratio must be positive, got {r}")));
            }
            if etas.len() != 2 {
                return Err(Error::invalid("a ratio needs exactly two fitted modes"));
            }
        }
        Ok(Self { etas, ratio, nonlinear })
    }

    /// Takes `η` from the sequence's first `num_modes` modes and the ratio from its
    /// SDR angles, which are proportional to `χ_eff`.
    pub fn from_spec(spec: &RamseySpec, num_modes: usize, nonlinear: bool) -> Result<Self> {
        if spec.modes.len() < num_modes {
            return Err(Error::invalid("spec has fewer modes than the fit"));
        }
        let etas = spec.modes[..num_modes].iter().map(|m| m.eta).collect();
        let th = &spec.theta_target;
        let ratio = if num_modes == 2 && th[1] != 0.0 { Some(th[0] / th[1]) } else { None };
        Self::new(etas, ratio, nonlinear)
    }

    /// Weights `w_j` with `χ_eff,j = w_j χ_eff,1` and `γ_j = w_j γ₁`.
    pub fn mode_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.etas.len()];
        w[0] = 1.0;
        if let Some(r) = self.ratio {
            w[1] = 1.0 / r;
        }
        w
    }

    /// `S_j(n) = M_j(n)² S(n_j)`, or `2n_j + 1` in the linear model.
    pub fn phase_weight(&self, n: &[usize], j: usize) -> f64 {
        if !self.nonlinear {
            return 2.0 * n[j] as f64 + 1.0;
        }
        let m: f64 = (0..self.etas.len())
            .filter(|&l| l != j)
            .map(|l| spectator_b(n[l], self.etas[l]))
            .product();
        m * m * nonlinear_weight(n[j], self.etas[j])
    }

    /// Per-state coefficients `(a_n, c_n)` with phase `χ_eff,1 t a_n` after
    /// the offset and decay `γ₁ t c_n`.
    pub(crate) fn coefficients(&self, n: &[usize]) -> (f64, f64) {
        let w = self.mode_weights();
        let mut a = 0.0;
        let mut c = 0.0;
        for j in 0..w.len() {
            if w[j] == 0.0 {
                continue;
            }
            a += w[j] * (self.phase_weight(n, j) - 1.0);
            c += w[j] * (2.0 * n[j] as f64 + 1.0);
        }
        (a, c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitModelParams {
    /// γ₁ (1/s).
    pub gamma_1: f64,
    /// χ_eff,1 (rad/s).
    pub chi_eff_1: f64,
    /// χ_res (rad/s).
    pub chi_res: f64,
    pub populations: FockDistribution,
}

/// `g_↑(t) = Σ_n (p_n/2)(1 − e^{−γ_n t} cos(Φ_tot,n + 2χ_res t − φ_off))` with
/// `Φ_tot,n = t Σ_j χ_eff,j S_j(n)` and `φ_off = t Σ_j χ_eff,j`.
pub fn pup_model_full(params: &FitModelParams, setting: &FitSetting, times: &[f64]) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64)> = params
        .populations
        .iter()
        .map(|(n, p)| {
            let (a, c) = setting.coefficients(n);
            (p, a, c)
        })
        .collect();
    times
        .iter()
        .map(|&t| {
            terms
                .iter()
                .map(|&(p, a, c)| {
                    let psi = params.chi_eff_1 * a * t + 2.0 * params.chi_res * t;
                    0.5 * p * (1.0 - (-params.gamma_1 * c * t).exp() * psi.cos())
                })
                .sum()
        })
        .collect()
}

/// `f_↑(t) = ½(1 − e^{−γt} cos(2χt + φ))`.
pub fn single_fock_model(gamma: f64, chi: f64, phase: f64, t: f64) -> f64 {
    0.5 * (1.0 - (-gamma * t).exp() * (2.0 * chi * t + phase).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ModeSpec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn coherent(alpha2: f64, n_max: usize) -> FockDistribution {
        let mut w = (-alpha2).exp();
        let mut d = FockDistribution::new();
        for n in 0..=n_max {
            d.add(vec![n], w).unwrap();
            w *= alpha2 / (n + 1) as f64;
        }
        d
    }

    #[test]
    fn linear_examples() {
        let vac = FockDistribution::from_entries([(vec![0], 1.0)]).unwrap();
        assert_eq!(pup_model_linear(&vac, &[1.3]), 0.0);
        let one = FockDistribution::from_entries([(vec![1], 1.0)]).unwrap();
        assert_abs_diff_eq!(pup_model_linear(&one, &[PI]), 1.0, epsilon = 1e-15);
        let coh = coherent(1.0, 40);
        assert_abs_diff_eq!(pup_model_linear(&coh, &[PI]), (1.0 - (-2f64).exp()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn single_fock_reduction() {
        let chi_eff = 2.0 * PI * 200.0;
        let setting = FitSetting::new(vec![0.0], None, false).unwrap();
        let params = FitModelParams {
            gamma_1: 5.0,
            chi_eff_1: chi_eff,
            chi_res: 0.0,
            populations: FockDistribution::from_entries([(vec![3], 1.0)]).unwrap(),
        };
        let ts = [0.0, 1e-4, 7e-4, 2e-3];
        let full = pup_model_full(&params, &setting, &ts);
        for (t, v) in ts.iter().zip(full) {
            // γ_n = γ₁(2n+1), χ = 3χ_eff.
            assert_abs_diff_eq!(v, single_fock_model(5.0 * 7.0, 3.0 * chi_eff, 0.0, *t), epsilon = 1e-14);
        }
    }

    #[test]
    fn large_decay_limit() {
        let setting = FitSetting::new(vec![0.1], None, true).unwrap();
        let params = FitModelParams {
            gamma_1: 1e9,
            chi_eff_1: 1000.0,
            chi_res: 3.0,
            populations: coherent(2.0, 6),
        };
        let v = pup_model_full(&params, &setting, &[1e-3]);
        assert_abs_diff_eq!(v[0], params.populations.total() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn nonlinear_cat_stays_positive_at_two_pi() {
        // Even cat α = 1.5 in the ideal populations.
        let a2: f64 = 2.25;
        let mut cat = FockDistribution::new();
        let norm = 2.0 * (1.0 + (-2.0 * a2).exp());
        let mut w = (-a2).exp();
        for n in 0..=20 {
            if n % 2 == 0 {
                cat.add(vec![n], 4.0 * w / norm).unwrap();
            }
            w *= a2 / (n + 1) as f64;
        }
        let chi = 2.0 * PI * 227.0;
        let t = PI / chi;
        let params = FitModelParams { gamma_1: 0.0, chi_eff_1: chi, chi_res: 0.0, populations: cat.clone() };
        let nl = pup_model_full(&params, &FitSetting::new(vec![0.1], None, true).unwrap(), &[t])[0];
        let lin = pup_model_full(&params, &FitSetting::new(vec![0.1], None, false).unwrap(), &[t])[0];
        assert!(nl > 1e-3, "{nl}");
        assert!(lin.abs() < 1e-9 + 0.5 * (1.0 - cat.total()));
    }

    #[test]
    fn setting_from_spec() {
        let modes = vec![ModeSpec::new(1e6, 0.1).unwrap(), ModeSpec::new(2e6, 0.087).unwrap()];
        let spec = RamseySpec::ideal(modes, vec![PI, PI / 2.0], 0.0);
        let s = FitSetting::from_spec(&spec, 2, true).unwrap();
        assert_eq!(s.etas, vec![0.1, 0.087]);
        assert_eq!(s.ratio, Some(2.0));
        assert_eq!(FitSetting::from_spec(&spec, 1, true).unwrap().ratio, None);
        assert!(FitSetting::new(vec![0.1], Some(1.0), true).is_err());
    }

    proptest! {
        #[test]
        fn reduces_to_linear(
            ps in proptest::collection::vec(0.0f64..1.0, 9),
            chi in 100.0f64..3000.0,
            r in 0.3f64..3.0,
            t in 0.0f64..5e-3,
        ) {
            let mut pops = FockDistribution::new();
            for (i, p) in ps.iter().enumerate() {
                pops.add(vec![i / 3, i % 3], p + 1e-3).unwrap();
            }
            let pops = pops.normalized().unwrap();
            let setting = FitSetting::new(vec![0.0, 0.0], Some(r), true).unwrap();
            let params = FitModelParams { gamma_1: 0.0, chi_eff_1: chi, chi_res: 0.0, populations: pops.clone() };
            let full = pup_model_full(&params, &setting, &[t])[0];
            let theta = [2.0 * chi * t, 2.0 * chi / r * t];
            let lin = pup_model_linear(&pops, &theta);
            prop_assert!((full - lin).abs() < 1e-12);
        }
    }
}
