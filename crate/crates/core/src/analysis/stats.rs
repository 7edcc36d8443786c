use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fit::FitResult;
use crate::error::{Error, Result};
use crate::fock::{parity_sign, FockDistribution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityEstimate {
    pub value: f64,
    pub std_err: f64,
}

/// `Σ p_n (−1)^{Σ_mask n} / Σ p_n` with linear error propagation through the
/// population covariance (diagonal errors when the covariance is missing).
pub fn parity_from_populations(fit: &FitResult, mode_mask: &[usize]) -> Result<ParityEstimate> {
    let pops: Vec<(Vec<usize>, f64)> = fit.populations.iter().map(|(n, p)| (n.to_vec(), p)).collect();
    let total: f64 = pops.iter().map(|(_, p)| p).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroVector("fitted populations sum to zero".into()));
    }
    if let Some((n, _)) = pops.first() {
        if let Some(&j) = mode_mask.iter().find(|&&j| j >= n.len()) {
            return Err(Error::invalid(format!("mode {j} out of range")));
        }
    }
    let value = pops.iter().map(|(n, p)| parity_sign(n, mode_mask) * p).sum::<f64>() / total;
    let grad: Vec<f64> = pops.iter().map(|(n, _)| (parity_sign(n, mode_mask) - value) / total).collect();
    let cov = &fit.population_covariance;
    let var = if cov.len() == grad.len() {
        grad.iter()
            .enumerate()
            .map(|(i, gi)| grad.iter().enumerate().map(|(j, gj)| gi * cov[i][j] * gj).sum::<f64>())
            .sum::<f64>()
    } else {
        grad.iter().zip(&pops).map(|(g, (n, _))| (g * fit.population_errors.get(n)).powi(2)).sum()
    };
    Ok(ParityEstimate {
        value: value.clamp(-1.0, 1.0),
        std_err: var.max(0.0).sqrt(),
    })
}

/// Fitted shift of one Fock state, for the linearity regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockShift {
    pub occupation: Vec<usize>,
    /// χ (rad/s) from the single-Fock fit.
    pub chi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearityFit {
    /// Slopes `χ_eff,j` (rad/s) of `χ = Σ_j χ_eff,j n_j`.
    pub chi_eff: Vec<f64>,
    pub std_err: Vec<f64>,
    pub rms_residual: f64,
}

impl LinearityFit {
    /// `χ_eff,1/χ_eff,2` for two-mode regressions.
    pub fn ratio(&self) -> Option<f64> {
        (self.chi_eff.len() == 2 && self.chi_eff[1] != 0.0).then(|| self.chi_eff[0] / self.chi_eff[1])
    }
}

/// Least-squares slopes of `2χ` against `n_j`, through the origin.
pub fn linearity_regression(points: &[FockShift]) -> Result<LinearityFit> {
    let m = points
        .first()
        .map(|p| p.occupation.len())
        .ok_or_else(|| Error::Regression("no data points".into()))?;
    if points.iter().any(|p| p.occupation.len() != m) {
        return Err(Error::Regression("occupations have different mode counts".into()));
    }
    for j in 0..m {
        let mut distinct: Vec<usize> = points.iter().map(|p| p.occupation[j]).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::Regression(format!("mode {j} needs at least two distinct occupations")));
        }
    }
    let a = DMatrix::from_fn(points.len(), m, |i, j| points[i].occupation[j] as f64);
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| 2.0 * p.chi));
    let svd = a.clone().svd(true, true);
    if svd.rank(1e-10 * svd.singular_values.max()) < m {
        return Err(Error::Regression("design matrix is rank deficient".into()));
    }
    let slopes = svd.solve(&y, 1e-12).map_err(|e| Error::Regression(e.to_string()))?;
    let resid = &a * &slopes - &y;
    let dof = points.len().saturating_sub(m);
    let s2 = if dof > 0 { resid.norm_squared() / dof as f64 } else { 0.0 };
    let inv = (a.transpose() * &a)
        .try_inverse()
        .ok_or_else(|| Error::Regression("normal matrix is singular".into()))?;
    Ok(LinearityFit {
        chi_eff: slopes.iter().map(|s| s / 2.0).collect(),
        std_err: (0..m).map(|j| (s2 * inv[(j, j)]).max(0.0).sqrt() / 2.0).collect(),
        rms_residual: (resid.norm_squared() / points.len() as f64).sqrt() / 2.0,
    })
}

/// `P_s = Σ_n p_n Π_i Γ_i^{(s_i)}(n)` with `Γ^↓ = cos²(θ_i·n/2)` and
/// `Γ^↑ = sin²(θ_i·n/2)`. `theta[i]` holds ion `i`'s SDR angles at the
/// evaluation time. Keys spell the string with `d`/`u`, ion 0 first.
/// Any shortfall of `Σp` below one is spread evenly over the strings.
pub fn spin_string_probabilities(populations: &FockDistribution, theta: &[Vec<f64>]) -> BTreeMap<String, f64> {
    let ions = theta.len();
    let mut out: BTreeMap<String, f64> = (0..1usize << ions).map(|s| (spin_string_key(s, ions), 0.0)).collect();
    let total = populations.total();
    for (n, p) in populations.iter() {
        let up: Vec<f64> = theta
            .iter()
            .map(|th| {
                let x: f64 = th.iter().zip(n).map(|(t, &k)| t * k as f64).sum();
                (0.5 * x).sin().powi(2)
            })
            .collect();
        for s in 0..1usize << ions {
            let w: f64 = (0..ions).map(|i| if s >> i & 1 == 1 { up[i] } else { 1.0 - up[i] }).product();
            *out.get_mut(&spin_string_key(s, ions)).expect("all strings present") += p * w;
        }
    }
    // Weight missing from the populations reads as an unpolarized spin, the ½ baseline of P_↑.
    let missing = (1.0 - total) / (1usize << ions) as f64;
    for v in out.values_mut() {
        *v += missing;
    }
    out
}

fn spin_string_key(s: usize, ions: usize) -> String {
    (0..ions).map(|i| if s >> i & 1 == 1 { 'u' } else { 'd' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::model::pup_model_linear;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn result_with(pops: FockDistribution) -> FitResult {
        FitResult {
            schema_version: 1,
            sum_p: pops.total(),
            population_errors: FockDistribution::from_entries(pops.iter().map(|(n, _)| (n.to_vec(), 0.01))).unwrap(),
            populations: pops,
            population_covariance: Vec::new(),
            datasets: Vec::new(),
            residual_norm: 0.0,
            residual_variance: 0.0,
            iterations: 0,
            starts: 1,
            converged: true,
            condition_number: 1.0,
            identifiability_condition: 1.0,
            degenerate: false,
            degenerate_groups: Vec::new(),
        }
    }

    #[test]
    fn parity_examples() {
        let even = FockDistribution::from_entries([(vec![0], 0.3), (vec![2], 0.5), (vec![4], 0.19)]).unwrap();
        let est = parity_from_populations(&result_with(even), &[0]).unwrap();
        assert!((est.value - 1.0).abs() < 1e-15 && est.std_err == 0.0);
        let odd = FockDistribution::from_entries([(vec![1, 0], 0.4), (vec![0, 1], 0.4), (vec![2, 1], 0.1)]).unwrap();
        assert!((parity_from_populations(&result_with(odd), &[0, 1]).unwrap().value + 1.0).abs() < 1e-15);
        let zero = FockDistribution::from_entries([(vec![0], 0.0)]).unwrap();
        assert!(parity_from_populations(&result_with(zero), &[0]).is_err());
    }

    #[test]
    fn regression_examples() {
        let pts: Vec<FockShift> = (0..5)
            .flat_map(|a| (0..3).map(move |b| (a, b)))
            .map(|(a, b)| FockShift { occupation: vec![a, b], chi: 200.0 * a as f64 + 400.0 * b as f64 })
            .collect();
        let fit = linearity_regression(&pts).unwrap();
        assert!((fit.chi_eff[0] - 200.0).abs() < 1e-9 && (fit.chi_eff[1] - 400.0).abs() < 1e-9);
        assert!((fit.ratio().unwrap() - 0.5).abs() < 1e-12);

        let collinear: Vec<FockShift> =
            (0..4).map(|a| FockShift { occupation: vec![a, 2 * a], chi: a as f64 }).collect();
        assert!(matches!(linearity_regression(&collinear), Err(Error::Regression(_))));
        let flat = vec![FockShift { occupation: vec![1], chi: 1.0 }, FockShift { occupation: vec![1], chi: 1.1 }];
        assert!(matches!(linearity_regression(&flat), Err(Error::Regression(_))));
    }

    #[test]
    fn spin_string_examples() {
        let one = FockDistribution::from_entries([(vec![1, 0], 1.0)]).unwrap();
        let p = spin_string_probabilities(&one, &[vec![PI, 0.0], vec![PI, 0.0]]);
        assert!((p["uu"] - 1.0).abs() < 1e-15);
        assert_eq!(p.len(), 4);
    }

    proptest! {
        #[test]
        fn spin_strings_normalized(
            ps in proptest::collection::vec(0.0f64..1.0, 1..10),
            th in proptest::collection::vec(-10.0f64..10.0, 6),
            ions in 1usize..4,
        ) {
            let total: f64 = ps.iter().sum::<f64>() + 1e-9;
            let pops = FockDistribution::from_entries(
                ps.iter().enumerate().map(|(i, p)| (vec![i % 3, i / 3], p / total)),
            ).unwrap();
            let theta: Vec<Vec<f64>> = (0..ions).map(|i| vec![th[2 * i], th[2 * i + 1]]).collect();
            let probs = spin_string_probabilities(&pops, &theta);
            prop_assert!((probs.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn single_ion_matches_linear(
            ps in proptest::collection::vec(0.0f64..1.0, 1..8),
            th in -10.0f64..10.0,
        ) {
            let total: f64 = ps.iter().sum::<f64>() + 0.5;
            let pops = FockDistribution::from_entries(ps.iter().enumerate().map(|(i, p)| (vec![i], p / total))).unwrap();
            let probs = spin_string_probabilities(&pops, &[vec![th]]);
            prop_assert!((probs["u"] - pup_model_linear(&pops, &[th])).abs() < 1e-12);
        }

        #[test]
        fn parity_is_bounded(ps in proptest::collection::vec(0.0f64..1.0, 2..12)) {
            let pops = FockDistribution::from_entries(ps.iter().enumerate().map(|(i, p)| (vec![i], p + 1e-6))).unwrap();
            let est = parity_from_populations(&result_with(pops), &[0]).unwrap();
            prop_assert!(est.value.abs() <= 1.0);
        }
    }
}
