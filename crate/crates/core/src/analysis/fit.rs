use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::RamseyDataset;
use super::lsq::{solve, LsqOptions, LsqResult};
use super::model::{single_fock_model, FitSetting};
use crate::error::{Error, Result};
use crate::fock::{occupation_key, FockDistribution};

/// Condition number of the column-normalized `JᵀJ` above which a fit is flagged.
pub const DEGENERACY_THRESHOLD: f64 = 1e8;
pub const DEFAULT_STARTS: usize = 8;
/// Smallest fringe amplitude (of `½ − P_↑` after removing its mean) accepted as oscillating.
const MIN_FRINGE_AMPLITUDE: f64 = 0.05;
const FIT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleFockFit {
    /// γ (1/s).
    pub gamma: f64,
    /// χ (rad/s).
    pub chi: f64,
    pub phase: f64,
    pub gamma_err: f64,
    pub chi_err: f64,
    pub phase_err: f64,
    pub rms_residual: f64,
    /// Set when the trace is the vacuum and χ = 0 was assigned without fitting.
    pub vacuum_convention: bool,
}

fn residual_scale(cost: f64, points: usize, params: usize) -> f64 {
    if points > params {
        2.0 * cost / (points - params) as f64
    } else {
        1.0
    }
}

/// `s² (JᵀJ)⁺`, with `s²` the residual variance per degree of freedom.
fn covariance(jac: &DMatrix<f64>, s2: f64) -> DMatrix<f64> {
    let a = jac.transpose() * jac;
    let pinv = a
        .clone()
        .pseudo_inverse(1e-14 * a.diagonal().amax().max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::zeros(a.nrows(), a.ncols()));
    pinv * s2
}

/// Condition number of `JᵀJ` after scaling every column of `J` to unit norm.
fn normalized_condition(jac: &DMatrix<f64>) -> f64 {
    let mut j = jac.clone();
    for mut col in j.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    let sv = j.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).powi(2)
    }
}

/// Strongest mean-removed Fourier component of `½ − y`: `(ω, amplitude, phase)`.
fn dominant_frequency(ts: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = ts.len();
    let yp: Vec<f64> = ys.iter().map(|y| 0.5 - y).collect();
    let mean = yp.iter().sum::<f64>() / n as f64;
    let span = ts[n - 1] - ts[0];
    let dt = span / (n - 1).max(1) as f64;
    let w_lo = PI / span;
    let w_hi = PI / dt;
    let power = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (t, y) in ts.iter().zip(&yp) {
            re += (y - mean) * (w * t).cos();
            im -= (y - mean) * (w * t).sin();
        }
        (re, im)
    };
    let grid = 4 * n;
    let mut best = (w_lo, 0.0);
    for i in 0..=grid {
        let w = w_lo + (w_hi - w_lo) * i as f64 / grid as f64;
        let (re, im) = power(w);
        let a = re.hypot(im);
        if a > best.1 {
            best = (w, a);
        }
    }
    // Golden-section refinement within one grid cell.
    let h = (w_hi - w_lo) / grid as f64;
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        let (rc, ic) = power(c);
        let (rd, id) = power(d);
        if rc.hypot(ic) > rd.hypot(id) {
            b = d;
        } else {
            a = c;
        }
    }
    let w = 0.5 * (a + b);
    let (re, im) = power(w);
    // ½ − f_↑ = ½e^{−γt}cos(ωt + φ) ≈ ¼(e^{i(ωt+φ)} + c.c.) near t = 0.
    (w, 4.0 * re.hypot(im) / n as f64, im.atan2(re))
}

/// Fits `f_↑(t) = ½(1 − e^{−γt}cos(2χt + φ))` to a trace of Fock state `occupation`.
///
/// The vacuum gets `χ = 0` without a fit. `f_↑` is invariant under
/// `(χ, φ) → (−χ, −φ)`, so the fit returns `χ ≥ 0` unless the trace carries a
/// spec whose `Σ_j χ_eff,j n_j` is negative.
pub fn fit_single_fock(trace: &RamseyDataset, occupation: &[usize]) -> Result<SingleFockFit> {
    trace.validate()?;
    if occupation.iter().all(|&n| n == 0) {
        let rms = (trace.p_up.iter().map(|p| p * p).sum::<f64>() / trace.len() as f64).sqrt();
        return Ok(SingleFockFit {
            gamma: 0.0,
            chi: 0.0,
            phase: 0.0,
            gamma_err: 0.0,
            chi_err: 0.0,
            phase_err: 0.0,
            rms_residual: rms,
            vacuum_convention: true,
        });
    }
    if trace.len() < 4 {
        return Err(Error::DegenerateFit("at least four points are needed".into()));
    }
    let ts = &trace.times;
    let ys = &trace.p_up;
    let (w, amp, phase0) = dominant_frequency(ts, ys);
    if amp < MIN_FRINGE_AMPLITUDE {
        return Err(Error::DegenerateFit(format!(
            "trace does not oscillate (fringe amplitude {amp:.3})"
        )));
    }
    let model = |x: &DVector<f64>| {
        let (g, c, p) = (x[0], x[1], x[2]);
        let r = DVector::from_iterator(ts.len(), ts.iter().zip(ys).map(|(&t, y)| single_fock_model(g, c, p, t) - y));
        let j = DMatrix::from_fn(ts.len(), 3, |i, k| {
            let t = ts[i];
            let e = (-g * t).exp();
            let psi = 2.0 * c * t + p;
            match k {
                0 => 0.5 * t * e * psi.cos(),
                1 => e * t * psi.sin(),
                _ => 0.5 * e * psi.sin(),
            }
        });
        (r, j)
    };
    let lower = [0.0, 0.0, f64::NEG_INFINITY];
    let opts = LsqOptions::default();
    let mut best: Option<LsqResult> = None;
    for g0 in [0.0, 1.0 / (ts[ts.len() - 1] - ts[0])] {
        let res = solve(DVector::from_vec(vec![g0, 0.5 * w, phase0]), &lower, &opts, model);
        if best.as_ref().is_none_or(|b| res.cost < b.cost) {
            best = Some(res);
        }
    }
    let res = best.expect("at least one start");
    if !res.converged {
        return Err(Error::Fit {
            reason: "single-Fock fit did not converge".into(),
            best_residual: res.residuals.norm(),
        });
    }
    let cov = covariance(&res.jacobian, residual_scale(res.cost, ts.len(), 3));
    let sign = match &trace.spec {
        Some(spec) => {
            let design: f64 = spec.chi_eff().iter().zip(occupation).map(|(c, &n)| c * n as f64).sum();
            if design < 0.0 {
                -1.0
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    let phase = (sign * res.x[2] + PI).rem_euclid(2.0 * PI) - PI;
    Ok(SingleFockFit {
        gamma: res.x[0],
        chi: sign * res.x[1],
        phase,
        gamma_err: cov[(0, 0)].max(0.0).sqrt(),
        chi_err: cov[(1, 1)].max(0.0).sqrt(),
        phase_err: cov[(2, 2)].max(0.0).sqrt(),
        rms_residual: (2.0 * res.cost / ts.len() as f64).sqrt(),
        vacuum_convention: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Largest occupation per mode on the fitted grid.
    pub n_max: usize,
    pub nonlinear: bool,
    pub starts: usize,
    /// Design `χ_eff,1` (rad/s), one value for all traces or one per trace.
    /// Traces with a drive-bearing spec fall back to its `χ_eff,1`.
    pub chi_guess: Option<Vec<f64>>,
    /// Starting γ₁ (1/s).
    pub gamma_guess: f64,
    /// Lamb-Dicke parameters of the fitted modes; taken from trace specs when absent.
    pub etas: Option<Vec<f64>>,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_max: 6,
            nonlinear: true,
            starts: DEFAULT_STARTS,
            chi_guess: None,
            gamma_guess: 10.0,
            etas: None,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFit {
    pub ratio_label: Option<f64>,
    pub gamma_1: f64,
    pub gamma_1_err: f64,
    /// Magnitude of χ_eff,1 (rad/s); the model is even in its sign.
    pub chi_eff_1: f64,
    pub chi_eff_1_err: f64,
    pub chi_res: f64,
    pub chi_res_err: f64,
    pub rms_residual: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub schema_version: u32,
    pub populations: FockDistribution,
    pub population_errors: FockDistribution,
    /// Population covariance in the key order of `populations`.
    pub population_covariance: Vec<Vec<f64>>,
    pub sum_p: f64,
    pub datasets: Vec<DatasetFit>,
    pub residual_norm: f64,
    /// Unweighted: `Σr² / (points − parameters)`.
    pub residual_variance: f64,
    pub iterations: usize,
    pub starts: usize,
    pub converged: bool,
    /// Condition number of the normalized `JᵀJ` at the optimum.
    pub condition_number: f64,
    /// Same for the population block of the linear (`η → 0`) design, which
    /// exposes structural degeneracies only lifted by small `η²` corrections.
    pub identifiability_condition: f64,
    pub degenerate: bool,
    /// Occupations whose linear-design columns coincide.
    pub degenerate_groups: Vec<Vec<String>>,
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn occupation_grid(num_modes: usize, n_max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..num_modes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..=n_max).map(move |k| {
                    let mut v = prefix.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    out.sort();
    out
}

struct Problem<'a> {
    datasets: &'a [RamseyDataset],
    /// Per dataset, per occupation: `(a_n, c_n)`.
    coeffs: Vec<Vec<(f64, f64)>>,
    k: usize,
    rows: usize,
}

impl Problem<'_> {
    fn block(&self, d: usize, x: &DVector<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let ds = &self.datasets[d];
        let base = self.k + 3 * d;
        let (g, c, res) = (x[base], x[base + 1], x[base + 2]);
        let mut r = vec![0.0; ds.len()];
        let mut j = DMatrix::zeros(ds.len(), self.k + 3 * self.datasets.len());
        for (i, &t) in ds.times.iter().enumerate() {
            let mut v = 0.0;
            let (mut dg, mut dc, mut dr) = (0.0, 0.0, 0.0);
            for (n, &(a, cn)) in self.coeffs[d].iter().enumerate() {
                let p = x[n];
                let e = (-g * cn * t).exp();
                let psi = c * a * t + 2.0 * res * t;
                let (s, co) = psi.sin_cos();
                let col = 0.5 * (1.0 - e * co);
                v += p * col;
                j[(i, n)] = col;
                dg += 0.5 * p * e * cn * t * co;
                dc += 0.5 * p * e * s * a * t;
                dr += p * e * s * t;
            }
            r[i] = v - ds.p_up[i];
            j[(i, base)] = dg;
            j[(i, base + 1)] = dc;
            j[(i, base + 2)] = dr;
        }
        (r, j)
    }

    fn eval(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let blocks: Vec<(Vec<f64>, DMatrix<f64>)> =
            (0..self.datasets.len()).into_par_iter().map(|d| self.block(d, x)).collect();
        let cols = x.len();
        let mut r = DVector::zeros(self.rows);
        let mut j = DMatrix::zeros(self.rows, cols);
        let mut row = 0;
        for (rb, jb) in blocks {
            let n = rb.len();
            r.rows_mut(row, n).copy_from_slice(&rb);
            j.view_mut((row, 0), (n, cols)).copy_from(&jb);
            row += n;
        }
        (r, j)
    }
}

fn dataset_setting(d: &RamseyDataset, num_modes: usize, options: &FitOptions) -> Result<FitSetting> {
    let etas = match (&options.etas, &d.spec) {
        (Some(e), _) => {
            if e.len() < num_modes {
                return Err(Error::invalid(format!("{num_modes} Lamb-Dicke parameter(s) required")));
            }
            e[..num_modes].to_vec()
        }
        (None, Some(spec)) if spec.modes.len() >= num_modes => {
            spec.modes[..num_modes].iter().map(|m| m.eta).collect()
        }
        _ => return Err(Error::invalid("Lamb-Dicke parameters must come from the options or the trace spec")),
    };
    FitSetting::new(etas, if num_modes == 2 { d.ratio_label } else { None }, options.nonlinear)
}

fn design_chi(d: &RamseyDataset, idx: usize, options: &FitOptions) -> Result<f64> {
    if let Some(g) = &options.chi_guess {
        let v = if g.len() == 1 { g[0] } else { *g.get(idx).ok_or_else(|| Error::invalid("one χ guess per trace"))? };
        return Ok(v.abs());
    }
    if let Some(spec) = &d.spec {
        let c = spec.chi_eff()[0].abs();
        if c > 0.0 {
            return Ok(c);
        }
    }
    Err(Error::invalid(format!("trace {idx} has no design χ_eff,1; pass a guess")))
}

/// Populations with every column pairwise identical in the linear design.
fn coincident_groups(grid: &[Vec<usize>], lin: &DMatrix<f64>) -> Vec<Vec<String>> {
    let k = grid.len();
    let cols: Vec<DVector<f64>> = (0..k)
        .map(|n| {
            let c = lin.column(n).clone_owned();
            let norm = c.norm();
            if norm > 0.0 {
                c / norm
            } else {
                c
            }
        })
        .collect();
    let mut group_of: Vec<Option<usize>> = vec![None; k];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for a in 0..k {
        if group_of[a].is_some() {
            continue;
        }
        let mut g = vec![a];
        for b in (a + 1)..k {
            if group_of[b].is_none() && (&cols[a] - &cols[b]).norm() < 1e-6 {
                g.push(b);
                group_of[b] = Some(groups.len());
            }
        }
        group_of[a] = Some(groups.len());
        groups.push(g);
    }
    groups
        .into_iter()
        .filter(|g| g.len() > 1)
        .map(|g| g.into_iter().map(|n| occupation_key(&grid[n])).collect())
        .collect()
}

fn thermal_start(grid: &[Vec<usize>], nbar: f64) -> Vec<f64> {
    let q = nbar / (1.0 + nbar);
    let w: Vec<f64> = grid.iter().map(|n| n.iter().map(|&k| q.powi(k as i32)).product()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

const START_NBAR: [f64; 8] = [1.0, 0.5, 2.0, 0.75, 1.5, 0.3, 3.0, 1.25];

/// Joint bounded fit of shared populations on `{0..n_max}^M` and per-trace
/// `(γ₁, χ_eff,1, χ_res)`. Traces with a ratio label are two-mode.
pub fn fit_populations(datasets: &[RamseyDataset], options: &FitOptions) -> Result<FitResult> {
    if datasets.is_empty() {
        return Err(Error::invalid("at least one trace is required"));
    }
    if options.starts == 0 {
        return Err(Error::invalid("at least one start is required"));
    }
    for d in datasets {
        d.validate()?;
    }
    let two_mode = datasets.iter().any(|d| d.ratio_label.is_some());
    if two_mode && datasets.iter().any(|d| d.ratio_label.is_none()) {
        return Err(Error::invalid("mixing single-mode and ratio-labelled traces is not supported"));
    }
    let num_modes = if two_mode { 2 } else { 1 };
    let grid = occupation_grid(num_modes, options.n_max);
    let k = grid.len();
    let settings: Vec<FitSetting> =
        datasets.iter().map(|d| dataset_setting(d, num_modes, options)).collect::<Result<_>>()?;
    let chis: Vec<f64> =
        datasets.iter().enumerate().map(|(i, d)| design_chi(d, i, options)).collect::<Result<_>>()?;
    let coeffs: Vec<Vec<(f64, f64)>> =
        settings.iter().map(|s| grid.iter().map(|n| s.coefficients(n)).collect()).collect();
    let rows: usize = datasets.iter().map(|d| d.len()).sum();
    let problem = Problem {
        datasets,
        coeffs,
        k,
        rows,
    };
    let nparams = k + 3 * datasets.len();
    let mut lower = vec![0.0; nparams];
    for d in 0..datasets.len() {
        lower[k + 3 * d + 2] = f64::NEG_INFINITY;
    }
    let opts = LsqOptions {
        max_iter: options.max_iter,
        ..LsqOptions::default()
    };
    let runs: Vec<LsqResult> = (0..options.starts)
        .into_par_iter()
        .map(|s| {
            let scale = if options.starts == 1 {
                1.0
            } else {
                0.8 + 0.4 * s as f64 / (options.starts - 1) as f64
            };
            let mut x0 = thermal_start(&grid, START_NBAR[s % START_NBAR.len()]);
            for chi in &chis {
                x0.extend([options.gamma_guess.max(0.0), chi * scale, 0.0]);
            }
            solve(DVector::from_vec(x0), &lower, &opts, |x| problem.eval(x))
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.cost < a.cost { b } else { a })
        .expect("at least one start");
    if !best.converged {
        return Err(Error::Fit {
            reason: format!("no start converged within {} iterations", options.max_iter),
            best_residual: best.residuals.norm(),
        });
    }
    let x = &best.x;
    let s2 = residual_scale(best.cost, rows, nparams);
    let cov = covariance(&best.jacobian, s2);

    let lin_problem = Problem {
        datasets,
        coeffs: settings
            .iter()
            .map(|s| {
                let lin = FitSetting { nonlinear: false, ..s.clone() };
                grid.iter().map(|n| lin.coefficients(n)).collect()
            })
            .collect(),
        k,
        rows,
    };
    let (_, lin_jac) = lin_problem.eval(x);
    let lin_pop = lin_jac.columns(0, k).clone_owned();
    let identifiability_condition = normalized_condition(&lin_pop);
    let condition_number = normalized_condition(&best.jacobian);
    let degenerate_groups = coincident_groups(&grid, &lin_pop);
    // The linear design can hold null vectors that the nonlinear shifts lift,
    // so only the fitted-model conditioning and exact coincidences decide.
    let degenerate = condition_number > DEGENERACY_THRESHOLD || !degenerate_groups.is_empty();
    if degenerate {
        log::warn!(
            "population fit is degenerate (condition {condition_number:.2e}); {} coincident group(s)",
            degenerate_groups.len()
        );
    }

    let populations = FockDistribution::from_entries(grid.iter().cloned().zip(x.iter().take(k).map(|p| p.max(0.0))))?;
    let population_errors =
        FockDistribution::from_entries(grid.iter().cloned().zip((0..k).map(|i| cov[(i, i)].max(0.0).sqrt())))?;
    let population_covariance = (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect();
    let mut offset = 0;
    let dataset_fits = datasets
        .iter()
        .enumerate()
        .map(|(d, ds)| {
            let b = k + 3 * d;
            let r = best.residuals.rows(offset, ds.len());
            offset += ds.len();
            DatasetFit {
                ratio_label: ds.ratio_label,
                gamma_1: x[b],
                gamma_1_err: cov[(b, b)].max(0.0).sqrt(),
                chi_eff_1: x[b + 1],
                chi_eff_1_err: cov[(b + 1, b + 1)].max(0.0).sqrt(),
                chi_res: x[b + 2],
                chi_res_err: cov[(b + 2, b + 2)].max(0.0).sqrt(),
                rms_residual: (r.norm_squared() / ds.len() as f64).sqrt(),
                points: ds.len(),
            }
        })
        .collect();
    Ok(FitResult {
        schema_version: FIT_SCHEMA_VERSION,
        sum_p: populations.total(),
        populations,
        population_errors,
        population_covariance,
        datasets: dataset_fits,
        residual_norm: best.residuals.norm(),
        residual_variance: s2,
        iterations: best.iterations,
        starts: options.starts,
        converged: best.converged,
        condition_number,
        identifiability_condition,
        degenerate,
        degenerate_groups,
    })
}
