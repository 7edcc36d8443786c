use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::{DriveSegment, ModeSpec, Sideband};
use crate::error::{Error, Result};
use crate::special::{laguerre, laguerre_f, spectator_b};

/// Validity ratios above this trigger a warning.
pub const VALIDITY_WARN_RATIO: f64 = 0.2;

static VALIDITY_WARNED: AtomicBool = AtomicBool::new(false);

/// Second-order coefficients of one drive segment (all rad/s).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersiveCoefficients {
    pub detunings: Vec<f64>,
    pub chi: Vec<f64>,
    /// Symmetric, zero diagonal.
    pub kappa: Vec<Vec<f64>>,
    pub stark: f64,
    /// `η_j Ω √(n_ref+1) / |δ_j|`.
    pub validity: Vec<f64>,
    /// `|K_jk| / |δ_j − δ_k|`, zero diagonal.
    pub pair_validity: Vec<Vec<f64>>,
    pub n_ref: usize,
}

impl DispersiveCoefficients {
    pub fn max_validity(&self) -> f64 {
        self.validity.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn dispersive_coefficients(
    modes: &[ModeSpec],
    segment: &DriveSegment,
    n_ref: usize,
) -> Result<DispersiveCoefficients> {
    let deltas = segment.sideband_detunings(modes);
    if let Some(j) = deltas.iter().position(|d| d.abs() < 1e-9) {
        return Err(Error::Resonance { mode: j });
    }
    let g: Vec<f64> = modes.iter().map(|m| segment.coupling(m)).collect();
    let chi: Vec<f64> = g.iter().zip(&deltas).map(|(g, d)| -g * g / d).collect();
    let m = modes.len();
    let mut kappa = vec![vec![0.0; m]; m];
    let mut pair_validity = vec![vec![0.0; m]; m];
    for j in 0..m {
        for k in 0..m {
            if j == k {
                continue;
            }
            kappa[j][k] = -0.5 * g[j] * g[k] * (1.0 / deltas[j] + 1.0 / deltas[k]);
            let gap = (deltas[j] - deltas[k]).abs();
            pair_validity[j][k] = if gap > 0.0 {
                kappa[j][k].abs() / gap
            } else {
                f64::INFINITY
            };
        }
    }
    let validity: Vec<f64> = modes
        .iter()
        .zip(&deltas)
        .map(|(mode, d)| mode.eta * segment.omega_rabi * ((n_ref + 1) as f64).sqrt() / d.abs())
        .collect();
    for (j, v) in validity.iter().enumerate() {
        // Warn once per process; the coefficients are recomputed for every pulse.
        if *v > VALIDITY_WARN_RATIO * (1.0 + 1e-9) && !VALIDITY_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!(
                "mode {j}: dispersive validity ratio {v:.3} exceeds {VALIDITY_WARN_RATIO} at n_ref = {n_ref}"
            );
        }
    }
    Ok(DispersiveCoefficients {
        detunings: deltas,
        chi,
        kappa,
        stark: segment.stark_shift(),
        validity,
        pair_validity,
        n_ref,
    })
}

/// Spectator product `M_j(n) = Π_{ℓ≠j} B_ℓ(n_ℓ)`.
pub(crate) fn spectator_product(n: &[usize], modes: &[ModeSpec], j: usize) -> f64 {
    (0..modes.len())
        .filter(|&l| l != j)
        .map(|l| spectator_b(n[l], modes[l].eta))
        .product()
}

/// `S(n) = e^{−η²}([L_n⁽¹⁾]²/(n+1) + [L_{n−1}⁽¹⁾]²/n)`; tends to `2n+1` as η → 0.
pub fn nonlinear_weight(n: usize, eta: f64) -> f64 {
    let x = eta * eta;
    let a = laguerre(n, 1.0, x).powi(2) / (n as f64 + 1.0);
    let b = if n == 0 {
        0.0
    } else {
        laguerre(n - 1, 1.0, x).powi(2) / n as f64
    };
    (-x).exp() * (a + b)
}

/// Relative spin phase `Φ_n(t) = t Σ_j χ_j M_j(n)² S_j(n_j)` (rad).
pub fn nonlinear_phase(n: &[usize], coefficients: &DispersiveCoefficients, modes: &[ModeSpec], t: f64) -> f64 {
    t * (0..modes.len())
        .map(|j| {
            let m = spectator_product(n, modes, j);
            coefficients.chi[j] * m * m * nonlinear_weight(n[j], modes[j].eta)
        })
        .sum::<f64>()
}

/// Second-order energy shifts `(E_↓(n), E_↑(n))` of one ion (rad/s).
/// Their difference is the relative phase rate used by the effective engine.
pub fn second_order_energies(n: &[usize], modes: &[ModeSpec], segment: &DriveSegment, nonlinear: bool) -> (f64, f64) {
    let mut down = 0.0;
    let mut up = 0.0;
    for (j, mode) in modes.iter().enumerate() {
        let g = segment.coupling(mode);
        let delta = segment.sideband_detuning(mode);
        let nj = n[j] as f64;
        let (f_hi, f_lo, m2) = if nonlinear {
            let m = spectator_product(n, modes, j);
            let lo = if n[j] == 0 { 0.0 } else { laguerre_f(n[j] - 1, mode.eta) };
            (laguerre_f(n[j], mode.eta).powi(2), lo * lo, m * m)
        } else {
            (1.0, 1.0, 1.0)
        };
        let raise = g * g * m2 * (nj + 1.0) * f_hi / delta;
        let lower = g * g * m2 * nj * f_lo / delta;
        match segment.sideband {
            Sideband::Blue => {
                down += raise;
                up -= lower;
            }
            Sideband::Red => {
                down += lower;
                up -= raise;
            }
        }
    }
    (down, up)
}

/// Spin-independent part of the nonlinear second-order shift, relative to
/// its linear (number-independent) value (rad/s). Reported as a diagnostic.
pub fn spin_independent_shift(n: &[usize], modes: &[ModeSpec], segment: &DriveSegment) -> f64 {
    let (d_nl, u_nl) = second_order_energies(n, modes, segment, true);
    let (d_l, u_l) = second_order_energies(n, modes, segment, false);
    0.5 * (d_nl + u_nl) - 0.5 * (d_l + u_l)
}

/// Per-ion drive parameters: Lamb-Dicke factor for each mode and Rabi frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonParams {
    pub etas: Vec<f64>,
    pub omega_rabi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiIonModel {
    /// `chi_matrix[i][j] = −η_ij² Ω_i² / (4 δ_ij)`.
    pub chi_matrix: Vec<Vec<f64>>,
    pub eta_matrix: Vec<Vec<f64>>,
    pub omega_rabi: Vec<f64>,
}

impl MultiIonModel {
    /// SDR angle vectors `θ_i(t) = 2t (χ_i1, …, χ_iM)`, the per-ion analogue
    /// of the single-ion `θ_j = 2χ_j t`.
    pub fn theta(&self, t: f64) -> Vec<Vec<f64>> {
        self.chi_matrix
            .iter()
            .map(|row| row.iter().map(|c| 2.0 * c * t).collect())
            .collect()
    }
}

/// Builds per-ion dispersive shifts. Each ion uses its own segment for the
/// carrier detuning and sideband; Ω and η come from `ion_params`.
pub fn multi_ion_model(
    ion_params: &[IonParams],
    modes: &[ModeSpec],
    segments: &[DriveSegment],
) -> Result<MultiIonModel> {
    if ion_params.is_empty() || ion_params.len() != segments.len() {
        return Err(Error::invalid(format!(
            "{} ion parameter set(s) but {} segment(s)",
            ion_params.len(),
            segments.len()
        )));
    }
    let mut chi_matrix = Vec::with_capacity(ion_params.len());
    for (ion, seg) in ion_params.iter().zip(segments) {
        if ion.etas.len() != modes.len() {
            return Err(Error::invalid("per-ion eta list must have one entry per mode"));
        }
        let mut ion_modes = Vec::with_capacity(modes.len());
        for (m, &eta) in modes.iter().zip(&ion.etas) {
            ion_modes.push(ModeSpec::new(m.omega, eta)?);
        }
        let seg = DriveSegment {
            omega_rabi: ion.omega_rabi,
            ..*seg
        };
        chi_matrix.push(dispersive_coefficients(&ion_modes, &seg, 0)?.chi);
    }
    Ok(MultiIonModel {
        chi_matrix,
        eta_matrix: ion_params.iter().map(|p| p.etas.clone()).collect(),
        omega_rabi: ion_params.iter().map(|p| p.omega_rabi).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const TWO_PI: f64 = 2.0 * PI;

    fn trap() -> Vec<ModeSpec> {
        vec![
            ModeSpec::new(TWO_PI * 0.94e6, 0.10).unwrap(),
            ModeSpec::new(TWO_PI * 1.27e6, 0.087).unwrap(),
        ]
    }

    #[test]
    fn single_mode_chi() {
        let modes = &trap()[..1];
        let seg = DriveSegment::from_sideband_detuning(Sideband::Blue, &modes[0], TWO_PI * 110e3, TWO_PI * 100e3, 0.0)
            .unwrap();
        let c = dispersive_coefficients(modes, &seg, 0).unwrap();
        // Independent arithmetic: −(0.1² · 100² / (4 · 110)) kHz.
        let expect_hz = -(0.01 * 100.0 * 100.0 / (4.0 * 110.0)) * 1e3;
        assert_abs_diff_eq!(c.chi[0] / TWO_PI, expect_hz, epsilon = 1e-9);
        assert_abs_diff_eq!(c.chi[0] / TWO_PI, -227.27, epsilon = 0.01);
        assert_abs_diff_eq!(c.stark / TWO_PI, -2380.95, epsilon = 0.01);
        assert!(c.stark.abs() / c.chi[0].abs() > 10.0);
    }

    #[test]
    fn kappa_cancels_for_opposite_detunings() {
        let modes = [ModeSpec::new(10.0, 0.1).unwrap(), ModeSpec::new(30.0, 0.1).unwrap()];
        let seg = DriveSegment::new(Sideband::Blue, 1.0, 20.0, 0.0).unwrap();
        let c = dispersive_coefficients(&modes, &seg, 0).unwrap();
        assert_eq!(c.detunings, vec![10.0, -10.0]);
        assert_abs_diff_eq!(c.kappa[0][1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn resonance_is_an_error() {
        let modes = trap();
        let seg = DriveSegment::from_sideband_detuning(Sideband::Blue, &modes[1], 0.0, 1.0, 0.0).unwrap();
        assert!(matches!(dispersive_coefficients(&modes, &seg, 0), Err(Error::Resonance { mode: 1 })));
    }

    #[test]
    fn nonlinear_phase_examples() {
        let modes = trap();
        let seg = DriveSegment::from_sideband_detuning(Sideband::Blue, &modes[0], TWO_PI * 110e3, TWO_PI * 100e3, 0.0)
            .unwrap();
        let c = dispersive_coefficients(&modes[..1], &seg, 0).unwrap();
        let t = 1e-3;
        let ratio = nonlinear_phase(&[0], &c, &modes[..1], t) / (t * c.chi[0]);
        assert_abs_diff_eq!(ratio, (-0.01f64).exp(), epsilon = 1e-12);

        let c2 = dispersive_coefficients(&modes, &seg, 0).unwrap();
        let phi = nonlinear_phase(&[1, 0], &c2, &modes, t);
        let m1 = (-0.087f64.powi(2)).exp();
        let s1 = nonlinear_weight(1, 0.1);
        let m2 = (-0.01f64).exp() * 0.99f64.powi(2);
        let s2 = nonlinear_weight(0, 0.087);
        assert_abs_diff_eq!(phi, t * (c2.chi[0] * m1 * s1 + c2.chi[1] * m2 * s2), epsilon = 1e-12);
    }

    #[test]
    fn energy_difference_matches_phase_rate() {
        let modes = trap();
        for sb in [Sideband::Red, Sideband::Blue] {
            let seg = DriveSegment::new(sb, TWO_PI * 100e3, TWO_PI * 1.05e6 * sb.sign() * -1.0, 0.0).unwrap();
            let c = dispersive_coefficients(&modes, &seg, 0).unwrap();
            for n in [[0, 0], [1, 0], [3, 2], [0, 5]] {
                let (d, u) = second_order_energies(&n, &modes, &seg, true);
                assert_abs_diff_eq!(u - d, nonlinear_phase(&n, &c, &modes, 1.0), epsilon = 1e-9);
                let (dl, ul) = second_order_energies(&n, &modes, &seg, false);
                let lin: f64 = (0..2).map(|j| c.chi[j] * (2.0 * n[j] as f64 + 1.0)).sum();
                assert_abs_diff_eq!(ul - dl, lin, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn multi_ion_reductions() {
        let modes = trap();
        let seg = DriveSegment::from_sideband_detuning(Sideband::Blue, &modes[0], TWO_PI * 110e3, TWO_PI * 100e3, 0.0)
            .unwrap();
        let ion = IonParams { etas: vec![0.10, 0.087], omega_rabi: TWO_PI * 100e3 };
        let single = multi_ion_model(&[ion.clone()], &modes, &[seg]).unwrap();
        let direct = dispersive_coefficients(&modes, &seg, 0).unwrap();
        assert_eq!(single.chi_matrix[0], direct.chi);
        let pair = multi_ion_model(&[ion.clone(), ion.clone()], &modes, &[seg, seg]).unwrap();
        assert_eq!(pair.chi_matrix[0], pair.chi_matrix[1]);
        let boosted = IonParams { omega_rabi: ion.omega_rabi * 2f64.sqrt(), ..ion };
        let b = multi_ion_model(&[boosted], &modes, &[seg]).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(b.chi_matrix[0][j], 2.0 * direct.chi[j], epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn chi_sign_opposes_detuning(delta_khz in prop_oneof![-500.0f64..-5.0, 5.0f64..500.0]) {
            let modes = trap();
            let seg = DriveSegment::from_sideband_detuning(
                Sideband::Blue, &modes[0], TWO_PI * delta_khz * 1e3, TWO_PI * 100e3, 0.0).unwrap();
            let c = dispersive_coefficients(&modes, &seg, 0).unwrap();
            for j in 0..2 {
                prop_assert_eq!(c.chi[j].signum(), -c.detunings[j].signum());
            }
            prop_assert!((c.kappa[0][1] - c.kappa[1][0]).abs() < 1e-12);
        }

        #[test]
        fn weight_tends_to_linear(n in 0usize..20) {
            prop_assert!((nonlinear_weight(n, 1e-6) - (2 * n + 1) as f64).abs() < 1e-8);
        }
    }
}
