use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::hamiltonian::SegmentHamiltonian;
use crate::error::{Error, Result};
use crate::fock::{Representation, SpinMotionState};

/// Spectral form of a segment Hamiltonian; reusable for any duration.
#[derive(Clone, Debug)]
pub struct Propagator {
    vecs: DMatrix<C64>,
    vals: DVector<f64>,
    frame: Vec<f64>,
    stark: Vec<f64>,
}

fn phases(energies: impl Iterator<Item = f64>, t: f64) -> Vec<C64> {
    energies.map(|e| C64::from_polar(1.0, -e * t)).collect()
}

impl Propagator {
    pub fn new(h: &SegmentHamiltonian) -> Self {
        let herm = (&h.matrix + h.matrix.adjoint()).scale(0.5);
        let eig = herm.symmetric_eigen();
        Self {
            vecs: eig.eigenvectors,
            vals: eig.eigenvalues,
            frame: h.frame.clone(),
            stark: h.analytic_stark.clone(),
        }
    }

    fn pre_post(&self, t0: f64, t: f64) -> (Vec<C64>, Vec<C64>) {
        // W(τ) = exp(−i H₀ τ) for either sideband.
        let pre = phases(self.frame.iter().copied(), t0);
        let post: Vec<C64> = self
            .frame
            .iter()
            .zip(&self.stark)
            .map(|(f, s)| C64::from_polar(1.0, f * (t0 + t) - s * t))
            .collect();
        (pre, post)
    }

    /// Full interaction-picture propagator `S(t)·W†(t₀+t)·e^{−iHt}·W(t₀)`.
    pub fn unitary(&self, t0: f64, t: f64) -> DMatrix<C64> {
        let (pre, post) = self.pre_post(t0, t);
        let e = phases(self.vals.iter().copied(), t);
        let mut left = self.vecs.clone();
        for (c, z) in e.iter().enumerate() {
            for r in 0..left.nrows() {
                left[(r, c)] *= z;
            }
        }
        let mut u = left * self.vecs.adjoint();
        let n = u.nrows();
        for r in 0..n {
            for c in 0..n {
                u[(r, c)] *= post[r] * pre[c];
            }
        }
        u
    }

    pub fn apply(&self, state: &mut SpinMotionState, t0: f64, t: f64) {
        if t == 0.0 {
            return;
        }
        let (pre, post) = self.pre_post(t0, t);
        let e = phases(self.vals.iter().copied(), t);
        if state.is_pure() {
            state.apply_diagonal(&pre);
            let v = state.as_pure().expect("pure");
            let mut w = self.vecs.ad_mul(v);
            for (x, z) in w.iter_mut().zip(&e) {
                *x *= z;
            }
            let out = &self.vecs * w;
            *state = SpinMotionState::from_pure(state.space().clone(), out).expect("same dimension");
            state.apply_diagonal(&post);
        } else {
            let u = self.unitary(t0, t);
            state.apply_operator(&u);
        }
    }
}

/// Evolves through one segment starting at local time zero.
pub fn evolve_segment(state: &SpinMotionState, h: &SegmentHamiltonian, duration: f64) -> Result<SpinMotionState> {
    evolve_segment_at(state, h, 0.0, duration)
}

/// Evolves through a segment that starts at `t0` on a continuous drive clock.
/// Consecutive segments with equal detuning compose exactly.
pub fn evolve_segment_at(
    state: &SpinMotionState,
    h: &SegmentHamiltonian,
    t0: f64,
    duration: f64,
) -> Result<SpinMotionState> {
    if state.space() != &h.space {
        return Err(Error::invalid("state and Hamiltonian live in different spaces"));
    }
    if !(duration >= 0.0) {
        return Err(Error::invalid(format!("duration must be non-negative, got {duration}")));
    }
    let mut out = state.clone();
    if duration > 0.0 {
        Propagator::new(h).apply(&mut out, t0, duration);
    }
    Ok(out)
}

/// `γ_n = Σ_j γ_j (2 n_j + 1)`.
pub fn decay_rate(n: &[usize], gammas: &[f64]) -> f64 {
    n.iter()
        .zip(gammas)
        .map(|(&nj, g)| g * (2.0 * nj as f64 + 1.0))
        .sum()
}

/// Damps spin coherences between motional Fock states `n`, `n′` by
/// `exp(−(γ_n + γ_n′) t / 2)`. Populations are untouched.
pub fn dephase(state: &SpinMotionState, gammas: &[f64], t: f64) -> Result<SpinMotionState> {
    let space = state.space();
    if gammas.len() != space.num_modes() {
        return Err(Error::invalid(format!(
            "{} decay rate(s) for {} mode(s)",
            gammas.len(),
            space.num_modes()
        )));
    }
    if !matches!(state.representation(), Representation::Density(_)) {
        return Err(Error::Representation(
            "dephasing requires a density operator; promote with to_density()".into(),
        ));
    }
    let md = space.motional_dim();
    let rates: Vec<f64> = (0..md)
        .map(|m| decay_rate(&space.occupation(m), gammas))
        .collect();
    let mut out = state.clone();
    let rho = out.density_mut().expect("density");
    let d = rho.nrows();
    for r in 0..d {
        let (sr, mr) = (r / md, r % md);
        for c in 0..d {
            let (sc, mc) = (c / md, c % md);
            if sr != sc {
                rho[(r, c)] *= (-(rates[mr] + rates[mc]) * t / 2.0).exp();
            }
        }
    }
    Ok(out)
}
