use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::space::{HilbertSpace, Spin};
use super::state::SpinMotionState;
use crate::error::{Error, Result};

pub const DEFAULT_LEAKAGE_THRESHOLD: f64 = 1e-4;

/// Sign of a cat or entangled-coherent-state superposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn of(n: usize) -> Self {
        if n % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Coherent-state Fock amplitudes `e^{−|α|²/2} αⁿ/√n!` for `n < dim`.
pub fn coherent_amplitudes(alpha: C64, dim: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(dim);
    let mut c = C64::from((-0.5 * alpha.norm_sqr()).exp());
    for n in 0..dim {
        if n > 0 {
            c = c * alpha / (n as f64).sqrt();
        }
        out.push(c);
    }
    out
}

/// Poisson weight lost by truncating a coherent state to `dim` levels.
pub fn truncation_leakage(alpha: C64, dim: usize) -> f64 {
    let kept: f64 = coherent_amplitudes(alpha, dim).iter().map(|c| c.norm_sqr()).sum();
    (1.0 - kept).max(0.0)
}

fn embed(space: &HilbertSpace, spins: &[Spin], motional: &[C64]) -> Result<SpinMotionState> {
    let si = space.spin_index(spins)?;
    let md = space.motional_dim();
    let mut v = DVector::<C64>::zeros(space.dim());
    for (m, a) in motional.iter().enumerate() {
        v[si * md + m] = *a;
    }
    SpinMotionState::from_pure(space.clone(), v)
}

fn warn_leakage(what: &str, leakage: f64, threshold: f64) {
    if leakage > threshold {
        log::warn!("{what}: truncation leakage {leakage:.3e} exceeds {threshold:.1e}");
    }
}

pub fn fock_state(space: &HilbertSpace, n: &[usize], spins: &[Spin]) -> Result<SpinMotionState> {
    let idx = space.index(spins, n)?;
    let mut v = DVector::<C64>::zeros(space.dim());
    v[idx] = C64::new(1.0, 0.0);
    SpinMotionState::from_pure(space.clone(), v)
}

/// Truncated, renormalized product of coherent states, one amplitude per mode.
pub fn coherent_state(space: &HilbertSpace, alphas: &[C64], spins: &[Spin]) -> Result<SpinMotionState> {
    coherent_state_with_threshold(space, alphas, spins, DEFAULT_LEAKAGE_THRESHOLD)
}

pub fn coherent_state_with_threshold(
    space: &HilbertSpace,
    alphas: &[C64],
    spins: &[Spin],
    threshold: f64,
) -> Result<SpinMotionState> {
    if alphas.len() != space.num_modes() {
        return Err(Error::invalid(format!(
            "{} amplitude(s) given for {} mode(s)",
            alphas.len(),
            space.num_modes()
        )));
    }
    let per_mode: Vec<Vec<C64>> = alphas
        .iter()
        .zip(space.mode_dims())
        .map(|(&a, &d)| coherent_amplitudes(a, d))
        .collect();
    let mut mot = vec![C64::new(0.0, 0.0); space.motional_dim()];
    let mut kept = 0.0;
    for (m, slot) in mot.iter_mut().enumerate() {
        let occ = space.occupation(m);
        *slot = occ
            .iter()
            .enumerate()
            .map(|(j, &n)| per_mode[j][n])
            .product();
        kept += slot.norm_sqr();
    }
    warn_leakage("coherent state", 1.0 - kept, threshold);
    embed(space, spins, &mot)?.normalized()
}

/// `(|α⟩ ± |−α⟩)/√(2(1 ± e^{−2|α|²}))` in `mode`, other modes in vacuum.
///
/// Normalization is analytic, so the truncated vector keeps its true Fock
/// weights and its norm falls short of one by the truncation leakage.
pub fn cat_state(
    space: &HilbertSpace,
    alpha: C64,
    parity: Parity,
    mode: usize,
    spins: &[Spin],
) -> Result<SpinMotionState> {
    cat_state_with_threshold(space, alpha, parity, mode, spins, DEFAULT_LEAKAGE_THRESHOLD)
}

pub fn cat_state_with_threshold(
    space: &HilbertSpace,
    alpha: C64,
    parity: Parity,
    mode: usize,
    spins: &[Spin],
    threshold: f64,
) -> Result<SpinMotionState> {
    if mode >= space.num_modes() {
        return Err(Error::invalid(format!("mode {mode} out of range")));
    }
    superposition(space, alpha, parity, &[mode], spins, threshold, "cat state")
}

/// `(|α,…,α⟩ ± |−α,…,−α⟩)` over every mode, analytically normalized.
pub fn ecs_state(space: &HilbertSpace, alpha: C64, parity: Parity, spins: &[Spin]) -> Result<SpinMotionState> {
    ecs_state_with_threshold(space, alpha, parity, spins, DEFAULT_LEAKAGE_THRESHOLD)
}

pub fn ecs_state_with_threshold(
    space: &HilbertSpace,
    alpha: C64,
    parity: Parity,
    spins: &[Spin],
    threshold: f64,
) -> Result<SpinMotionState> {
    let modes: Vec<usize> = (0..space.num_modes()).collect();
    superposition(space, alpha, parity, &modes, spins, threshold, "entangled coherent state")
}

fn superposition(
    space: &HilbertSpace,
    alpha: C64,
    parity: Parity,
    modes: &[usize],
    spins: &[Spin],
    threshold: f64,
    what: &str,
) -> Result<SpinMotionState> {
    let s = parity.sign();
    let norm = 2.0 * (1.0 + s * (-2.0 * modes.len() as f64 * alpha.norm_sqr()).exp());
    if norm < 1e-12 {
        return Err(Error::ZeroVector(format!(
            "odd superposition is undefined at alpha = {alpha}"
        )));
    }
    let scale = 1.0 / norm.sqrt();
    let per_mode: Vec<Vec<C64>> = space
        .mode_dims()
        .iter()
        .map(|&d| coherent_amplitudes(alpha, d))
        .collect();
    let mut mot = vec![C64::new(0.0, 0.0); space.motional_dim()];
    let mut kept = 0.0;
    for (m, slot) in mot.iter_mut().enumerate() {
        let occ = space.occupation(m);
        if (0..occ.len()).any(|j| !modes.contains(&j) && occ[j] != 0) {
            continue;
        }
        let total: usize = modes.iter().map(|&j| occ[j]).sum();
        let interference = 1.0 + s * if total % 2 == 0 { 1.0 } else { -1.0 };
        if interference == 0.0 {
            continue;
        }
        let prod: C64 = modes.iter().map(|&j| per_mode[j][occ[j]]).product();
        *slot = prod * interference * scale;
        kept += slot.norm_sqr();
    }
    warn_leakage(what, 1.0 - kept, threshold);
    embed(space, spins, &mot)
}

/// Convex combination `Σ w_k ρ_k` in density form; weights must be non-negative.
pub fn mixture(components: &[(f64, &SpinMotionState)]) -> Result<SpinMotionState> {
    let first = components
        .first()
        .ok_or_else(|| Error::invalid("mixture needs at least one component"))?;
    let space = first.1.space().clone();
    let d = space.dim();
    let mut rho = DMatrix::<C64>::zeros(d, d);
    for (w, st) in components {
        if *w < 0.0 || !w.is_finite() {
            return Err(Error::invalid(format!("mixture weight {w} is invalid")));
        }
        if st.space() != &space {
            return Err(Error::invalid("mixture components live in different spaces"));
        }
        let dens = st.to_density();
        rho += dens.as_density().expect("density form").scale(*w);
    }
    SpinMotionState::from_density(space, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn down() -> Vec<Spin> {
        vec![Spin::Down]
    }

    #[test]
    fn fock_examples() {
        let s = HilbertSpace::new(&[13, 13], 1).unwrap();
        let v = fock_state(&s, &[0, 0], &down()).unwrap();
        assert_eq!(v.mean_occupation(0), 0.0);
        let two = fock_state(&s, &[2, 0], &down()).unwrap();
        assert_eq!(two.mean_occupation(0), 2.0);
        assert_eq!(two.populations().get(&[2, 0]), 1.0);
        let s1 = HilbertSpace::new(&[13], 1).unwrap();
        assert_eq!(fock_state(&s1, &[10], &down()).unwrap().parity(&[0]), 1.0);
        let p11 = fock_state(&s, &[1, 1], &down()).unwrap();
        assert_eq!(p11.parity(&[0, 1]), 1.0);
        assert!(matches!(
            fock_state(&s, &[13, 0], &down()),
            Err(Error::OutOfBounds { .. })
        ));
    }

    fn poisson(mean: f64, n: usize) -> f64 {
        let mut w = (-mean).exp();
        for k in 1..=n {
            w *= mean / k as f64;
        }
        w
    }

    #[test]
    fn coherent_matches_poisson() {
        let s = HilbertSpace::new(&[13], 1).unwrap();
        let c = coherent_state(&s, &[C64::new(1.0, 0.0)], &down()).unwrap();
        let p = c.populations();
        assert_abs_diff_eq!(p.get(&[0]), (-1.0f64).exp(), epsilon = 1e-6);
        assert_abs_diff_eq!(p.get(&[1]), (-1.0f64).exp(), epsilon = 1e-6);
        for n in 0..13 {
            assert_abs_diff_eq!(p.get(&[n]), poisson(1.0, n), epsilon = 1e-8);
        }
        assert_abs_diff_eq!(c.parity(&[0]), (-2.0f64).exp(), epsilon = 1e-8);

        let s2 = HilbertSpace::new(&[13, 13], 1).unwrap();
        let c2 = coherent_state(&s2, &[C64::new(1.0, 0.0); 2], &down()).unwrap();
        assert_abs_diff_eq!(c2.populations().get(&[0, 0]), (-2.0f64).exp(), epsilon = 1e-6);

        let vac = coherent_state(&s, &[C64::new(0.0, 0.0)], &down()).unwrap();
        assert_eq!(vac.populations().get(&[0]), 1.0);
    }

    #[test]
    fn cat_examples() {
        let s = HilbertSpace::new(&[13], 1).unwrap();
        let a = C64::new(1.5, 0.0);
        let cat = cat_state(&s, a, Parity::Even, 0, &down()).unwrap();
        assert_abs_diff_eq!(cat.parity(&[0]), 1.0, epsilon = 1e-12);
        let x = 2.25f64;
        let p2 = 2.0 * (-x).exp() * x * x / 2.0 / (1.0 + (-2.0 * x).exp());
        assert_abs_diff_eq!(cat.populations().get(&[2]), p2, epsilon = 1e-12);
        assert_abs_diff_eq!(p2, 0.528, epsilon = 5e-4);

        let s7 = HilbertSpace::new(&[7], 1).unwrap();
        let cat7 = cat_state(&s7, a, Parity::Even, 0, &down()).unwrap();
        assert_abs_diff_eq!(cat7.populations().total(), 0.9964, epsilon = 5e-4);

        let odd = cat_state(&s, a, Parity::Odd, 0, &down()).unwrap();
        assert_abs_diff_eq!(odd.parity(&[0]), -1.0, epsilon = 1e-12);
        assert!(matches!(
            cat_state(&s, C64::new(0.0, 0.0), Parity::Odd, 0, &down()),
            Err(Error::ZeroVector(_))
        ));
    }

    #[test]
    fn ecs_examples() {
        let s = HilbertSpace::new(&[5, 5], 1).unwrap();
        let e = ecs_state(&s, C64::new(1.0, 0.0), Parity::Even, &down()).unwrap();
        assert_abs_diff_eq!(e.populations().total(), 0.9935, epsilon = 1e-3);
        assert_abs_diff_eq!(e.parity(&[0, 1]), 1.0, epsilon = 1e-12);
        let big = HilbertSpace::new(&[15, 15], 1).unwrap();
        let eb = ecs_state(&big, C64::new(1.0, 0.0), Parity::Odd, &down()).unwrap();
        assert_abs_diff_eq!(eb.norm_sqr(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(eb.parity(&[0, 1]), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixture_parity_interpolates() {
        let s = HilbertSpace::new(&[13], 1).unwrap();
        let a = C64::new(1.5, 0.0);
        let e = cat_state(&s, a, Parity::Even, 0, &down()).unwrap();
        let o = cat_state(&s, a, Parity::Odd, 0, &down()).unwrap();
        let m = mixture(&[(0.95, &e), (0.05, &o)]).unwrap();
        assert_abs_diff_eq!(m.parity(&[0]), 0.90, epsilon = 1e-6);
        m.validate(1e-6).unwrap();
    }
}
