use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::rotation::RotationAxis;
use crate::dynamics::{dispersive_coefficients, DriveSegment, ModeSpec, Sideband, VALIDITY_WARN_RATIO};
use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Two-step echo Ramsey setting `V(θ, φ)` with the Stark-cancelling duration split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RamseyRecord", into = "RamseyRecord")]
pub struct RamseySpec {
    pub modes: Vec<ModeSpec>,
    /// Realized SDR angles `θ_j = 2 χ_eff,j (t⁽¹⁾ + t⁽²⁾)`.
    pub theta_target: Vec<f64>,
    pub phi: f64,
    /// `Σ_j θ_j / 2`, applied through the final pulse phase.
    pub phi_off: f64,
    pub segments: [DriveSegment; 2],
    pub echo: RotationAxis,
}

/// Step-averaged shifts `χ_eff,j = (−χ_j⁽¹⁾ Δ⁽¹⁾ + χ_j⁽²⁾ Δ⁽²⁾) / (Δ⁽¹⁾ + Δ⁽²⁾)` (rad/s).
pub fn effective_chi(modes: &[ModeSpec], segments: &[DriveSegment; 2]) -> Result<Vec<f64>> {
    let d1 = segments[0].carrier_detuning;
    let d2 = segments[1].carrier_detuning;
    check_carrier_pair(d1, d2)?;
    let c1 = dispersive_coefficients(modes, &segments[0], 0)?;
    let c2 = dispersive_coefficients(modes, &segments[1], 0)?;
    Ok(c1
        .chi
        .iter()
        .zip(&c2.chi)
        .map(|(a, b)| (-a * d1 + b * d2) / (d1 + d2))
        .collect())
}

fn check_carrier_pair(d1: f64, d2: f64) -> Result<()> {
    if d1 == 0.0 || d2 == 0.0 || d1.signum() != d2.signum() {
        return Err(Error::Scheduling {
            reason: format!(
                "carrier detunings must be nonzero with equal sign, got {:.3} Hz and {:.3} Hz",
                d1 / TWO_PI,
                d2 / TWO_PI
            ),
            achievable_ratio: None,
        });
    }
    Ok(())
}

impl RamseySpec {
    /// Builds a spec from two segments whose durations already satisfy the
    /// duration constraint; θ and φ_off are derived.
    pub fn from_segments(modes: Vec<ModeSpec>, segments: [DriveSegment; 2], phi: f64) -> Result<Self> {
        let chi = effective_chi(&modes, &segments)?;
        let total = segments[0].duration + segments[1].duration;
        let theta: Vec<f64> = chi.iter().map(|c| 2.0 * c * total).collect();
        let spec = Self {
            phi_off: theta.iter().sum::<f64>() / 2.0,
            modes,
            theta_target: theta,
            phi,
            segments,
            echo: RotationAxis::Y,
        };
        spec.check_invariants()?;
        Ok(spec)
    }

    /// Drive-free spec carrying exact angles, for the ideal engine. Its
    /// segments are empty placeholders, so `total_time` is zero.
    pub fn ideal(modes: Vec<ModeSpec>, theta: Vec<f64>, phi: f64) -> Self {
        let placeholder = DriveSegment {
            sideband: Sideband::Blue,
            omega_rabi: 0.0,
            carrier_detuning: 1.0,
            duration: 0.0,
        };
        Self {
            phi_off: theta.iter().sum::<f64>() / 2.0,
            modes,
            theta_target: theta,
            phi,
            segments: [placeholder; 2],
            echo: RotationAxis::Y,
        }
    }

    pub fn chi_eff(&self) -> Vec<f64> {
        effective_chi(&self.modes, &self.segments).expect("validated at construction")
    }

    pub fn total_time(&self) -> f64 {
        self.segments[0].duration + self.segments[1].duration
    }

    /// Same detunings, rescaled to total interaction time `t`.
    pub fn at_total_time(&self, t: f64) -> Self {
        let d1 = self.segments[0].carrier_detuning;
        let d2 = self.segments[1].carrier_detuning;
        let t1 = t * d1 / (d1 + d2);
        let segments = [self.segments[0].with_duration(t1), self.segments[1].with_duration(t - t1)];
        let theta: Vec<f64> = self.chi_eff().iter().map(|c| 2.0 * c * t).collect();
        Self {
            phi_off: theta.iter().sum::<f64>() / 2.0,
            theta_target: theta,
            segments,
            ..self.clone()
        }
    }

    pub fn with_phi(&self, phi: f64) -> Self {
        Self { phi, ..self.clone() }
    }

    /// Residual carrier Stark rotation angle `(Ω²/2)(t⁽¹⁾/Δ⁽¹⁾ − t⁽²⁾/Δ⁽²⁾)`,
    /// with per-step Rabi frequencies.
    pub fn stark_phase(&self) -> f64 {
        stark_phase(&self.segments)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let [s1, s2] = &self.segments;
        check_carrier_pair(s1.carrier_detuning, s2.carrier_detuning)?;
        if self.theta_target.len() != self.modes.len() {
            return Err(Error::invalid("one SDR angle per mode required"));
        }
        let lhs = s1.duration * s2.carrier_detuning;
        let rhs = s2.duration * s1.carrier_detuning;
        if (lhs - rhs).abs() > 1e-9 * lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE) {
            return Err(Error::Scheduling {
                reason: format!(
                    "duration ratio {:.12} differs from detuning ratio {:.12}",
                    s1.duration / s2.duration,
                    s1.carrier_detuning / s2.carrier_detuning
                ),
                achievable_ratio: None,
            });
        }
        let off: f64 = self.theta_target.iter().sum::<f64>() / 2.0;
        if (off - self.phi_off).abs() > 1e-9 * off.abs().max(1.0) {
            return Err(Error::invalid("phi_off must equal the half-sum of the SDR angles"));
        }
        Ok(())
    }
}

pub fn stark_phase(segments: &[DriveSegment; 2]) -> f64 {
    let term = |s: &DriveSegment| s.omega_rabi * s.omega_rabi * s.duration / s.carrier_detuning;
    0.5 * (term(&segments[0]) - term(&segments[1]))
}

/// How the two blue-sideband carrier detunings are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetuningChoice {
    /// Carrier detunings Δ⁽¹⁾, Δ⁽²⁾ (rad/s).
    Carrier { delta1: f64, delta2: f64 },
    /// Step `k` sits `delta_k` away from the blue sideband of `mode_k`.
    Sideband {
        mode1: usize,
        delta1: f64,
        mode2: usize,
        delta2: f64,
    },
    /// Brackets one mode's blue sideband at `+delta` then `−delta`.
    SingleMode { mode: usize, delta: f64 },
    /// Two-mode search: step 1 above the higher sideband, step 2 below the
    /// lower one, matching the ratio of the two θ targets.
    TwoModeRatio,
}

fn carrier_pair(modes: &[ModeSpec], choice: DetuningChoice) -> Result<(f64, f64)> {
    let mode = |j: usize| {
        modes
            .get(j)
            .ok_or_else(|| Error::invalid(format!("mode {j} out of range for {} mode(s)", modes.len())))
    };
    match choice {
        DetuningChoice::Carrier { delta1, delta2 } => Ok((delta1, delta2)),
        DetuningChoice::Sideband {
            mode1,
            delta1,
            mode2,
            delta2,
        } => Ok((mode(mode1)?.omega + delta1, mode(mode2)?.omega + delta2)),
        DetuningChoice::SingleMode { mode: j, delta } => {
            let w = mode(j)?.omega;
            Ok((w + delta.abs(), w - delta.abs()))
        }
        DetuningChoice::TwoModeRatio => Err(Error::invalid("ratio search has no fixed detunings")),
    }
}

fn blue_pair(omega_rabi: f64, d1: f64, d2: f64) -> Result<[DriveSegment; 2]> {
    Ok([
        DriveSegment::new(Sideband::Blue, omega_rabi, d1, 0.0)?,
        DriveSegment::new(Sideband::Blue, omega_rabi, d2, 0.0)?,
    ])
}

/// Chooses detunings and durations so that `2 χ_eff,j (t⁽¹⁾ + t⁽²⁾) = θ_j` for
/// every mode with `Some` target, under `t⁽¹⁾/t⁽²⁾ = Δ⁽¹⁾/Δ⁽²⁾`.
pub fn schedule_selective_decoupling(
    modes: &[ModeSpec],
    targets: &[Option<f64>],
    omega_rabi: f64,
    choice: DetuningChoice,
) -> Result<RamseySpec> {
    if targets.len() != modes.len() {
        return Err(Error::invalid(format!(
            "{} target(s) for {} mode(s)",
            targets.len(),
            modes.len()
        )));
    }
    let targeted: Vec<(usize, f64)> = targets
        .iter()
        .enumerate()
        .filter_map(|(j, t)| t.map(|v| (j, v)))
        .collect();
    if targeted.is_empty() || targeted.iter().all(|(_, v)| *v == 0.0) {
        return Err(Error::Scheduling {
            reason: "at least one nonzero θ target is required".into(),
            achievable_ratio: None,
        });
    }
    let (d1, d2) = match choice {
        DetuningChoice::TwoModeRatio => {
            if modes.len() != 2 || targeted.len() != 2 {
                return Err(Error::Scheduling {
                    reason: "ratio search needs exactly two modes, both targeted".into(),
                    achievable_ratio: None,
                });
            }
            search_ratio(modes, omega_rabi, targeted[0].1 / targeted[1].1)?
        }
        c => carrier_pair(modes, c)?,
    };
    let segments = blue_pair(omega_rabi, d1, d2)?;
    let chi = effective_chi(modes, &segments)?;

    let (j0, th0) = *targeted
        .iter()
        .find(|(_, v)| *v != 0.0)
        .expect("nonzero target checked above");
    if chi[j0] == 0.0 {
        return Err(Error::Scheduling {
            reason: format!("effective shift of mode {j0} vanishes"),
            achievable_ratio: None,
        });
    }
    let total = th0 / (2.0 * chi[j0]);
    if !(total > 0.0) {
        return Err(Error::Scheduling {
            reason: format!(
                "θ target {th0:.4} rad on mode {j0} has the opposite sign of χ_eff = {:.3} Hz; swap the detuning placement",
                chi[j0] / TWO_PI
            ),
            achievable_ratio: None,
        });
    }
    for &(j, th) in &targeted {
        let realized = 2.0 * chi[j] * total;
        if (realized - th).abs() > 1e-6 * th.abs().max(1e-3) {
            return Err(Error::Scheduling {
                reason: format!(
                    "mode {j}: requested θ = {th:.6} rad but these detunings give {realized:.6} rad"
                ),
                achievable_ratio: Some(chi[j0] / chi[j]),
            });
        }
    }
    let t1 = total * d1 / (d1 + d2);
    let segments = [segments[0].with_duration(t1), segments[1].with_duration(total - t1)];
    RamseySpec::from_segments(modes.to_vec(), segments, 0.0)
}

fn ratio_at(modes: &[ModeSpec], omega_rabi: f64, a: f64, b: f64) -> Option<f64> {
    let segs = blue_pair(omega_rabi, modes[1].omega + a, modes[0].omega - b).ok()?;
    let chi = effective_chi(modes, &segs).ok()?;
    Some(chi[0] / chi[1])
}

/// Ratio search over `δ₂⁽¹⁾ = a > 0` (above mode 2) and `δ₁⁽²⁾ = −b < 0`
/// (below mode 1), both bounded by half the mode spacing. Among solutions the
/// pair maximizing `min(a, b)` with validity ≤ 0.2 at n = 0 wins.
fn search_ratio(modes: &[ModeSpec], omega_rabi: f64, ratio: f64) -> Result<(f64, f64)> {
    let (lo_mode, hi_mode) = (modes[0].omega, modes[1].omega);
    if hi_mode <= lo_mode {
        return Err(Error::Scheduling {
            reason: "ratio search expects mode 2 above mode 1".into(),
            achievable_ratio: None,
        });
    }
    let cap = (hi_mode - lo_mode) / 2.0;
    let floor_for = |m: &ModeSpec| m.eta * omega_rabi / VALIDITY_WARN_RATIO;
    let a_min = floor_for(&modes[1]).max(1e-6 * cap);
    let b_min = floor_for(&modes[0]).max(1e-6 * cap);
    if a_min >= cap || b_min >= cap {
        return Err(Error::Scheduling {
            reason: "drive too strong for the mode spacing at validity 0.2".into(),
            achievable_ratio: None,
        });
    }
    let grid = 400;
    let mut best: Option<(f64, f64)> = None;
    let mut reach = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=grid {
        let b = b_min + (cap - b_min) * i as f64 / grid as f64;
        let f = |a: f64| ratio_at(modes, omega_rabi, a, b).map(|r| r - ratio);
        let (fa, fb) = match (f(a_min), f(cap)) {
            (Some(x), Some(y)) => (x, y),
            _ => continue,
        };
        reach.0 = reach.0.min(fa + ratio).min(fb + ratio);
        reach.1 = reach.1.max(fa + ratio).max(fb + ratio);
        if fa.signum() == fb.signum() {
            continue;
        }
        let (mut lo, mut hi, mut flo) = (a_min, cap, fa);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid).unwrap_or(f64::NAN);
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        if best.is_none_or(|(ba, bb)| a.min(b) > ba.min(bb)) {
            best = Some((a, b));
        }
    }
    match best {
        Some((a, b)) => Ok((hi_mode + a, lo_mode - b)),
        None => Err(Error::Scheduling {
            reason: format!(
                "ratio {ratio:.4} is outside the reachable range [{:.4}, {:.4}]",
                reach.0, reach.1
            ),
            achievable_ratio: Some(if ratio < reach.0 { reach.0 } else { reach.1 }),
        }),
    }
}

#[derive(Serialize, Deserialize)]
struct ModeRecord {
    omega_hz: f64,
    eta: f64,
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    sideband: Sideband,
    omega_rabi_hz: f64,
    carrier_detuning_hz: f64,
    duration_s: f64,
}

/// JSON layout: angles in rad, durations in s, frequencies as `ω/2π` in Hz.
#[derive(Serialize, Deserialize)]
struct RamseyRecord {
    modes: Vec<ModeRecord>,
    theta_rad: Vec<f64>,
    phi_rad: f64,
    phi_off_rad: f64,
    segments: Vec<SegmentRecord>,
    echo: RotationAxis,
}

impl From<RamseySpec> for RamseyRecord {
    fn from(s: RamseySpec) -> Self {
        Self {
            modes: s
                .modes
                .iter()
                .map(|m| ModeRecord {
                    omega_hz: m.omega / TWO_PI,
                    eta: m.eta,
                })
                .collect(),
            theta_rad: s.theta_target,
            phi_rad: s.phi,
            phi_off_rad: s.phi_off,
            segments: s
                .segments
                .iter()
                .map(|g| SegmentRecord {
                    sideband: g.sideband,
                    omega_rabi_hz: g.omega_rabi / TWO_PI,
                    carrier_detuning_hz: g.carrier_detuning / TWO_PI,
                    duration_s: g.duration,
                })
                .collect(),
            echo: s.echo,
        }
    }
}

impl TryFrom<RamseyRecord> for RamseySpec {
    type Error = Error;

    fn try_from(r: RamseyRecord) -> Result<Self> {
        let modes = r
            .modes
            .iter()
            .map(|m| ModeSpec::new(m.omega_hz * TWO_PI, m.eta))
            .collect::<Result<Vec<_>>>()?;
        let segs = r
            .segments
            .iter()
            .map(|g| DriveSegment::new(g.sideband, g.omega_rabi_hz * TWO_PI, g.carrier_detuning_hz * TWO_PI, g.duration_s))
            .collect::<Result<Vec<_>>>()?;
        let segments: [DriveSegment; 2] = segs
            .try_into()
            .map_err(|_| Error::invalid("a Ramsey spec has exactly two segments"))?;
        let spec = Self {
            modes,
            theta_target: r.theta_rad,
            phi: r.phi_rad,
            phi_off: r.phi_off_rad,
            segments,
            echo: r.echo,
        };
        spec.check_invariants()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn khz(x: f64) -> f64 {
        TWO_PI * x * 1e3
    }

    fn two_modes() -> Vec<ModeSpec> {
        vec![
            ModeSpec::new(khz(940.0), 0.10).unwrap(),
            ModeSpec::new(khz(1270.0), 0.087).unwrap(),
        ]
    }

    fn single() -> RamseySpec {
        let modes = vec![ModeSpec::new(khz(940.0), 0.10).unwrap()];
        schedule_selective_decoupling(
            &modes,
            &[Some(PI)],
            khz(100.0),
            DetuningChoice::SingleMode { mode: 0, delta: khz(110.0) },
        )
        .unwrap()
    }

    #[test]
    fn single_mode_schedule() {
        let s = single();
        assert_relative_eq!(s.segments[0].duration / s.segments[1].duration, 1050.0 / 830.0, max_relative = 1e-12);
        // g²/δ with g = ηΩ/2 = 2π·5 kHz and δ = 2π·110 kHz.
        let chi = khz(5.0) * khz(5.0) / khz(110.0);
        assert_relative_eq!(s.chi_eff()[0], chi, max_relative = 1e-12);
        assert_relative_eq!(s.total_time(), PI / (2.0 * chi), max_relative = 1e-12);
        assert!((s.total_time() - 1.100e-3).abs() < 1e-6);
        assert_relative_eq!(s.phi_off, PI / 2.0, max_relative = 1e-12);
        assert!(s.stark_phase().abs() < 1e-9);
    }

    #[test]
    fn rescaling_keeps_constraint() {
        let s = single().at_total_time(3.3e-3);
        s.check_invariants().unwrap();
        assert!(s.stark_phase().abs() < 1e-9);
        assert_relative_eq!(s.theta_target[0], 3.0 * PI, max_relative = 1e-3);
    }

    #[test]
    fn broken_ratio_is_rejected() {
        let mut s = single();
        s.segments[0].duration *= 1.01;
        assert!(matches!(s.check_invariants(), Err(Error::Scheduling { .. })));
        // Stark rotation of the extra 1% of step 1.
        let expect = 0.5 * khz(100.0).powi(2) * 0.01 * single().segments[0].duration / s.segments[0].carrier_detuning;
        assert_relative_eq!(s.stark_phase(), expect, max_relative = 1e-9);
    }

    #[test]
    fn table_detunings_give_target_ratios() {
        let modes = two_modes();
        for (d1, d2, ratio) in [(49.0, -142.5, 0.419), (50.0, -62.5, 0.808), (93.0, -50.0, 1.63)] {
            let choice = DetuningChoice::Sideband {
                mode1: 1,
                delta1: khz(d1),
                mode2: 0,
                delta2: khz(d2),
            };
            let segs = blue_pair(khz(100.0), carrier_pair(&modes, choice).unwrap().0, carrier_pair(&modes, choice).unwrap().1).unwrap();
            let chi = effective_chi(&modes, &segs).unwrap();
            assert!((chi[0] / chi[1] - ratio).abs() < 5e-3, "{} vs {ratio}", chi[0] / chi[1]);
            let spec = schedule_selective_decoupling(&modes, &[Some(PI), None], khz(100.0), choice).unwrap();
            assert_relative_eq!(spec.theta_target[0], PI, max_relative = 1e-12);
            assert_relative_eq!(spec.theta_target[1] * chi[0] / chi[1], PI, max_relative = 1e-9);
        }
    }

    #[test]
    fn unreachable_ratio_reports_achievable() {
        let modes = two_modes();
        let choice = DetuningChoice::Sideband {
            mode1: 1,
            delta1: khz(50.0),
            mode2: 0,
            delta2: khz(-62.5),
        };
        match schedule_selective_decoupling(&modes, &[Some(PI), Some(PI / 2.0)], khz(100.0), choice) {
            Err(Error::Scheduling { achievable_ratio: Some(r), .. }) => assert!((r - 0.808).abs() < 5e-3),
            other => panic!("expected scheduling error, got {other:?}"),
        }
    }

    #[test]
    fn ratio_search_hits_targets() {
        let modes = two_modes();
        for r in [0.5, 1.0, 2.0] {
            let spec =
                schedule_selective_decoupling(&modes, &[Some(PI * r), Some(PI)], khz(100.0), DetuningChoice::TwoModeRatio)
                    .unwrap();
            assert_relative_eq!(spec.theta_target[0], PI * r, max_relative = 1e-6);
            assert_relative_eq!(spec.theta_target[1], PI, max_relative = 1e-6);
            assert!(spec.stark_phase().abs() < 1e-9);
            for seg in &spec.segments {
                let c = dispersive_coefficients(&modes, seg, 0).unwrap();
                assert!(c.max_validity() <= VALIDITY_WARN_RATIO + 1e-9);
            }
        }
        assert!(matches!(
            schedule_selective_decoupling(&modes, &[Some(1e3), Some(1.0)], khz(100.0), DetuningChoice::TwoModeRatio),
            Err(Error::Scheduling { achievable_ratio: Some(_), .. })
        ));
    }

    #[test]
    fn opposite_sign_carriers_fail() {
        let modes = vec![ModeSpec::new(khz(940.0), 0.10).unwrap()];
        let choice = DetuningChoice::Carrier { delta1: khz(100.0), delta2: khz(-100.0) };
        assert!(matches!(
            schedule_selective_decoupling(&modes, &[Some(PI)], khz(100.0), choice),
            Err(Error::Scheduling { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let s = single();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("carrier_detuning_hz"));
        let back: RamseySpec = serde_json::from_str(&text).unwrap();
        assert_relative_eq!(back.total_time(), s.total_time(), max_relative = 1e-12);
        assert_relative_eq!(back.segments[0].carrier_detuning, s.segments[0].carrier_detuning, max_relative = 1e-12);
    }
}
