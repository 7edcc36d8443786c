use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schedule::RamseySpec;
use super::sequence::SimulatedSystem;
use crate::error::{Error, Result};
use crate::fock::{fock_state, Spin};

pub const DEFAULT_T_CAL: f64 = 4e-3;
pub const DEFAULT_SCAN_POINTS: usize = 41;

/// Vacuum check threshold after offset calibration.
const VACUUM_CHECK: f64 = 0.1;
/// Minimum fitted fringe amplitude accepted as a dip.
const MIN_DIP_AMPLITUDE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub amplitude: f64,
    pub center: f64,
    pub baseline: f64,
    pub rms_residual: f64,
}

/// Fits `b − a cos(k(x − c))` with `k` fixed; `c` is the dip nearest `near`.
/// Linear in `(b, a cos kc, a sin kc)`, so solved directly.
fn fit_dip(xs: &[f64], ys: &[f64], k: f64, near: f64) -> Result<SinusoidFit> {
    let n = xs.len();
    if n < 3 {
        return Err(Error::Calibration("at least three scan points are required".into()));
    }
    let a = DMatrix::from_fn(n, 3, |r, c| match c {
        0 => 1.0,
        1 => -(k * xs[r]).cos(),
        _ => -(k * xs[r]).sin(),
    });
    let y = DVector::from_column_slice(ys);
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::Calibration(format!("sinusoid fit failed: {e}")))?;
    let (b, ac, as_) = (sol[0], sol[1], sol[2]);
    let amplitude = ac.hypot(as_);
    let period = 2.0 * PI / k;
    let c0 = as_.atan2(ac) / k;
    let center = c0 + ((near - c0) / period).round() * period;
    let resid = &a * &sol - y;
    Ok(SinusoidFit {
        amplitude,
        center,
        baseline: b,
        rms_residual: (resid.norm_squared() / n as f64).sqrt(),
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn argmin(xs: &[f64], ys: &[f64]) -> f64 {
    let i = ys
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    xs[i]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetCalibration {
    /// Phase slope Δ_off (rad/s) to add to the final pulse.
    pub delta_off: f64,
    pub t_cal: f64,
    pub scan: Vec<(f64, f64)>,
    pub fit: SinusoidFit,
    /// Vacuum `P_↑(t_cal)` with the calibrated slope applied.
    pub vacuum_p_up: f64,
}

/// Scans the final-pulse phase slope Δ_off over `scan_range` (rad/s) at total
/// time `t_cal` on the vacuum and returns the center of the `P_↑` dip.
/// The slope already stored on `system` is replaced, not added to.
pub fn calibrate_offset(
    system: &SimulatedSystem,
    spec: &RamseySpec,
    t_cal: f64,
    scan_range: (f64, f64),
    points: usize,
) -> Result<OffsetCalibration> {
    if !(t_cal > 0.0) || !(scan_range.1 > scan_range.0) {
        return Err(Error::invalid("t_cal must be positive and the scan range non-empty"));
    }
    let sys = system.clone().with_offset_slope(0.0);
    let spins = vec![Spin::Down; sys.space.spin_count()];
    let vacuum = fock_state(&sys.space, &vec![0; sys.modes.len()], &spins)?;
    let at = spec.at_total_time(t_cal).with_phi(0.0);
    let xs = linspace(scan_range.0, scan_range.1, points);
    let ys: Vec<f64> = xs
        .par_iter()
        .map(|&d| {
            Ok(sys
                .ramsey_state_with_phase(&vacuum, &at, d * t_cal)?
                .spin_probability(0, Spin::Up))
        })
        .collect::<Result<_>>()?;
    let fit = fit_dip(&xs, &ys, t_cal, argmin(&xs, &ys))?;
    if fit.amplitude < MIN_DIP_AMPLITUDE || fit.center < scan_range.0 || fit.center > scan_range.1 {
        return Err(Error::Calibration(format!(
            "no dip in [{:.3}, {:.3}] Hz (amplitude {:.3}, center {:.3} Hz)",
            scan_range.0 / (2.0 * PI),
            scan_range.1 / (2.0 * PI),
            fit.amplitude,
            fit.center / (2.0 * PI)
        )));
    }
    let check = sys
        .clone()
        .with_offset_slope(fit.center)
        .ramsey_p_up(&vacuum, &at)?;
    if check >= VACUUM_CHECK {
        return Err(Error::Calibration(format!(
            "vacuum P_up = {check:.4} after calibration, expected below {VACUUM_CHECK}"
        )));
    }
    Ok(OffsetCalibration {
        delta_off: fit.center,
        t_cal,
        scan: xs.into_iter().zip(ys).collect(),
        fit,
        vacuum_p_up: check,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpiCalibration {
    pub t_pi: f64,
    /// Design value `π / (2|χ_eff|)` on the probed mode.
    pub t_design: f64,
    pub scan: Vec<(f64, f64)>,
    pub fit: SinusoidFit,
}

/// Probes `|2⟩` on `mode` (vacuum elsewhere) under `V(θ(t), 0)` and returns
/// the first dip of `P_↑`, where `θ_mode = π`. Scans `[0.5, 1.5]` times the design value.
pub fn calibrate_tpi(system: &SimulatedSystem, spec: &RamseySpec, mode: usize, points: usize) -> Result<TpiCalibration> {
    let chi = *spec
        .chi_eff()
        .get(mode)
        .ok_or_else(|| Error::invalid(format!("mode {mode} out of range")))?;
    if chi == 0.0 || spec.total_time() == 0.0 {
        return Err(Error::Calibration("probed mode has no dispersive shift".into()));
    }
    let dims = system.space.mode_dims();
    if dims[mode] < 3 {
        return Err(Error::Calibration("probe |2⟩ does not fit in the truncated space".into()));
    }
    let mut occ = vec![0; dims.len()];
    occ[mode] = 2;
    let spins = vec![Spin::Down; system.space.spin_count()];
    let probe = fock_state(&system.space, &occ, &spins)?;
    let t_design = PI / (2.0 * chi.abs());
    let xs = linspace(0.5 * t_design, 1.5 * t_design, points);
    let base = spec.with_phi(0.0);
    let ys: Vec<f64> = xs
        .par_iter()
        .map(|&t| system.ramsey_p_up(&probe, &base.at_total_time(t)))
        .collect::<Result<_>>()?;
    // P_↑ = ½ − ½cos(2θ(t)) with θ = 2|χ|t.
    let fit = fit_dip(&xs, &ys, 4.0 * chi.abs(), t_design)?;
    if fit.amplitude < MIN_DIP_AMPLITUDE || fit.center < xs[0] || fit.center > xs[xs.len() - 1] {
        return Err(Error::Calibration(format!(
            "no dip between {:.4} ms and {:.4} ms",
            xs[0] * 1e3,
            xs[xs.len() - 1] * 1e3
        )));
    }
    Ok(TpiCalibration {
        t_pi: fit.center,
        t_design,
        scan: xs.into_iter().zip(ys).collect(),
        fit,
    })
}
