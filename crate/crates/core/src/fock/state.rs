use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::distribution::{parity_sign, FockDistribution};
use super::space::{HilbertSpace, Spin};
use crate::error::{Error, Result};

/// Norms below this are treated as zero when renormalizing.
pub const NUMERICAL_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub enum Representation {
    Pure(DVector<C64>),
    Density(DMatrix<C64>),
}

/// Joint spin-motion state in a truncated space.
///
/// Constructors that use analytic normalization (cat states, ECS) can
/// yield vectors whose norm is slightly below one under truncation; every
/// probability reported by this type is the raw Born weight, so those
/// deficits show up in `populations().total()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StateRecord", into = "StateRecord")]
pub struct SpinMotionState {
    space: HilbertSpace,
    repr: Representation,
}

impl SpinMotionState {
    pub fn from_pure(space: HilbertSpace, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::invalid(format!(
                "vector length {} does not match space dimension {}",
                amplitudes.len(),
                space.dim()
            )));
        }
        Ok(Self {
            space,
            repr: Representation::Pure(amplitudes),
        })
    }

    pub fn from_density(space: HilbertSpace, rho: DMatrix<C64>) -> Result<Self> {
        let d = space.dim();
        if rho.nrows() != d || rho.ncols() != d {
            return Err(Error::invalid(format!(
                "density shape {}x{} does not match space dimension {d}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        Ok(Self {
            space,
            repr: Representation::Density(rho),
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.repr, Representation::Pure(_))
    }

    pub fn as_pure(&self) -> Option<&DVector<C64>> {
        match &self.repr {
            Representation::Pure(v) => Some(v),
            Representation::Density(_) => None,
        }
    }

    pub fn as_density(&self) -> Option<&DMatrix<C64>> {
        match &self.repr {
            Representation::Density(m) => Some(m),
            Representation::Pure(_) => None,
        }
    }

    pub(crate) fn density_mut(&mut self) -> Option<&mut DMatrix<C64>> {
        match &mut self.repr {
            Representation::Density(m) => Some(m),
            Representation::Pure(_) => None,
        }
    }

    pub fn to_density(&self) -> Self {
        match &self.repr {
            Representation::Pure(v) => Self {
                space: self.space.clone(),
                repr: Representation::Density(v * v.adjoint()),
            },
            Representation::Density(_) => self.clone(),
        }
    }

    /// Squared norm of a pure state or trace of a density operator.
    pub fn norm_sqr(&self) -> f64 {
        match &self.repr {
            Representation::Pure(v) => v.norm_squared(),
            Representation::Density(m) => m.diagonal().iter().map(|z| z.re).sum(),
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if !(n > NUMERICAL_FLOOR) {
            return Err(Error::Numerical(format!(
                "cannot renormalize a state with weight {n:.3e}"
            )));
        }
        let mut out = self.clone();
        match &mut out.repr {
            Representation::Pure(v) => *v /= C64::from(n.sqrt()),
            Representation::Density(m) => *m /= C64::from(n),
        }
        Ok(out)
    }

    /// Checks the unit-norm, Hermiticity and positivity conditions.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > tol {
            return Err(Error::invalid(format!("state norm/trace {n} differs from 1")));
        }
        if let Representation::Density(m) = &self.repr {
            let herm = (m - m.adjoint()).norm();
            if herm > tol {
                return Err(Error::invalid(format!("density not Hermitian ({herm:.2e})")));
            }
            let h = (m + m.adjoint()).scale(0.5);
            let min_eig = h
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if min_eig < -tol {
                return Err(Error::invalid(format!(
                    "density has negative eigenvalue {min_eig:.2e}"
                )));
            }
        }
        Ok(())
    }

    /// Raw weight on the flat basis index `i`.
    pub fn basis_weight(&self, i: usize) -> f64 {
        match &self.repr {
            Representation::Pure(v) => v[i].norm_sqr(),
            Representation::Density(m) => m[(i, i)].re,
        }
    }

    /// Motional Fock populations with the spin traced out.
    pub fn populations(&self) -> FockDistribution {
        let md = self.space.motional_dim();
        let mut p = vec![0.0; md];
        for i in 0..self.space.dim() {
            p[i % md] += self.basis_weight(i);
        }
        let mut d = FockDistribution::new();
        for (m, w) in p.into_iter().enumerate() {
            d.add(self.space.occupation(m), w.max(0.0))
                .expect("occupations share one length");
        }
        d
    }

    /// `⟨(−1)^{Σ_{j∈mask} n_j}⟩` using 0-based mode indices; an empty mask gives +1.
    pub fn parity(&self, mask: &[usize]) -> f64 {
        let norm = self.norm_sqr();
        if mask.is_empty() {
            return 1.0;
        }
        let md = self.space.motional_dim();
        let mut acc = 0.0;
        for i in 0..self.space.dim() {
            let n = self.space.occupation(i % md);
            acc += parity_sign(&n, mask) * self.basis_weight(i);
        }
        acc / norm
    }

    pub fn mean_occupation(&self, mode: usize) -> f64 {
        let md = self.space.motional_dim();
        let mut acc = 0.0;
        for i in 0..self.space.dim() {
            acc += self.space.occupation_of(i % md, mode) as f64 * self.basis_weight(i);
        }
        acc / self.norm_sqr()
    }

    /// Normalized probabilities of each packed spin configuration.
    pub fn spin_string_probabilities(&self) -> Vec<f64> {
        let md = self.space.motional_dim();
        let mut out = vec![0.0; self.space.spin_dim()];
        for i in 0..self.space.dim() {
            out[i / md] += self.basis_weight(i);
        }
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|p| *p /= total);
        out
    }

    /// Normalized probability of finding `ion` in `spin`.
    pub fn spin_probability(&self, ion: usize, spin: Spin) -> f64 {
        let probs = self.spin_string_probabilities();
        probs
            .iter()
            .enumerate()
            .filter(|(s, _)| self.space.spin_of(*s, ion) == spin)
            .map(|(_, p)| p)
            .sum()
    }

    /// Projects `ion` onto `spin`. Returns the unnormalized branch and its
    /// Born probability relative to the current norm.
    pub fn project_spin(&self, ion: usize, spin: Spin) -> (f64, Self) {
        let md = self.space.motional_dim();
        let keep: Vec<bool> = (0..self.space.dim())
            .map(|i| self.space.spin_of(i / md, ion) == spin)
            .collect();
        let mut out = self.clone();
        match &mut out.repr {
            Representation::Pure(v) => {
                for (i, k) in keep.iter().enumerate() {
                    if !k {
                        v[i] = C64::new(0.0, 0.0);
                    }
                }
            }
            Representation::Density(m) => {
                let d = m.nrows();
                for r in 0..d {
                    for c in 0..d {
                        if !(keep[r] && keep[c]) {
                            m[(r, c)] = C64::new(0.0, 0.0);
                        }
                    }
                }
            }
        }
        let p = out.norm_sqr() / self.norm_sqr();
        (p, out)
    }

    /// `ψ → Uψ` or `ρ → UρU†` for a full-space operator.
    pub fn apply_operator(&mut self, u: &DMatrix<C64>) {
        match &mut self.repr {
            Representation::Pure(v) => *v = u * &*v,
            Representation::Density(m) => *m = u * &*m * u.adjoint(),
        }
    }

    /// Applies a diagonal operator given by its entries.
    pub fn apply_diagonal(&mut self, d: &[C64]) {
        match &mut self.repr {
            Representation::Pure(v) => {
                for (x, z) in v.iter_mut().zip(d) {
                    *x *= z;
                }
            }
            Representation::Density(m) => {
                let n = m.nrows();
                for c in 0..n {
                    let dc = d[c].conj();
                    for r in 0..n {
                        m[(r, c)] *= d[r] * dc;
                    }
                }
            }
        }
    }

    /// Applies a single-ion 2×2 operator (basis ↓, ↑) to `ion`.
    pub fn apply_spin_operator(&mut self, ion: usize, u: &Matrix2<C64>) {
        let md = self.space.motional_dim();
        let mask = self.space.ion_mask(ion);
        let pairs: Vec<(usize, usize)> = (0..self.space.spin_dim())
            .filter(|s| s & mask == 0)
            .flat_map(|s| (0..md).map(move |m| (s * md + m, (s | mask) * md + m)))
            .collect();
        match &mut self.repr {
            Representation::Pure(v) => {
                for &(a, b) in &pairs {
                    let (x, y) = (v[a], v[b]);
                    v[a] = u[(0, 0)] * x + u[(0, 1)] * y;
                    v[b] = u[(1, 0)] * x + u[(1, 1)] * y;
                }
            }
            Representation::Density(m) => {
                let n = m.nrows();
                for c in 0..n {
                    for &(a, b) in &pairs {
                        let (x, y) = (m[(a, c)], m[(b, c)]);
                        m[(a, c)] = u[(0, 0)] * x + u[(0, 1)] * y;
                        m[(b, c)] = u[(1, 0)] * x + u[(1, 1)] * y;
                    }
                }
                for r in 0..n {
                    for &(a, b) in &pairs {
                        let (x, y) = (m[(r, a)], m[(r, b)]);
                        m[(r, a)] = x * u[(0, 0)].conj() + y * u[(0, 1)].conj();
                        m[(r, b)] = x * u[(1, 0)].conj() + y * u[(1, 1)].conj();
                    }
                }
            }
        }
    }

    /// `|⟨φ|ψ⟩|²` or `⟨φ|ρ|φ⟩` against a pure reference vector.
    pub fn overlap_with(&self, phi: &DVector<C64>) -> f64 {
        match &self.repr {
            Representation::Pure(v) => phi.dotc(v).norm_sqr(),
            Representation::Density(m) => phi.dotc(&(m * phi)).re,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct StateRecord {
    space: HilbertSpace,
    representation: RepresentationKind,
    /// Pure: one pair per basis index. Density: row-major, `dim²` pairs.
    amplitudes: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum RepresentationKind {
    Pure,
    Density,
}

impl From<SpinMotionState> for StateRecord {
    fn from(s: SpinMotionState) -> Self {
        let (representation, amplitudes) = match &s.repr {
            Representation::Pure(v) => (
                RepresentationKind::Pure,
                v.iter().map(|z| [z.re, z.im]).collect(),
            ),
            Representation::Density(m) => {
                let n = m.nrows();
                let mut a = Vec::with_capacity(n * n);
                for r in 0..n {
                    for c in 0..n {
                        a.push([m[(r, c)].re, m[(r, c)].im]);
                    }
                }
                (RepresentationKind::Density, a)
            }
        };
        StateRecord {
            space: s.space,
            representation,
            amplitudes,
        }
    }
}

impl TryFrom<StateRecord> for SpinMotionState {
    type Error = Error;

    fn try_from(r: StateRecord) -> Result<Self> {
        let vals: Vec<C64> = r.amplitudes.iter().map(|p| C64::new(p[0], p[1])).collect();
        let d = r.space.dim();
        match r.representation {
            RepresentationKind::Pure => {
                SpinMotionState::from_pure(r.space, DVector::from_vec(vals))
            }
            RepresentationKind::Density => {
                if vals.len() != d * d {
                    return Err(Error::invalid(format!(
                        "density needs {} amplitudes, got {}",
                        d * d,
                        vals.len()
                    )));
                }
                SpinMotionState::from_density(r.space, DMatrix::from_row_slice(d, d, &vals))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fock_state;

    #[test]
    fn projection_weights() {
        let s = HilbertSpace::new(&[3], 1).unwrap();
        let mut st = fock_state(&s, &[1], &[Spin::Down]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let had = Matrix2::new(h, h, h, -h).map(C64::from);
        st.apply_spin_operator(0, &had);
        let (p, branch) = st.project_spin(0, Spin::Up);
        assert!((p - 0.5).abs() < 1e-12);
        let b = branch.normalized().unwrap();
        assert!((b.spin_probability(0, Spin::Up) - 1.0).abs() < 1e-12);
        assert_eq!(b.populations().get(&[1]), 1.0);
    }

    #[test]
    fn density_spin_operator_matches_pure() {
        let s = HilbertSpace::new(&[2, 2], 2).unwrap();
        let mut v = DVector::from_fn(s.dim(), |i, _| C64::new(i as f64 + 1.0, (i as f64).sin()));
        v /= C64::from(v.norm());
        let mut pure = SpinMotionState::from_pure(s.clone(), v).unwrap();
        let mut dens = pure.to_density();
        let u = Matrix2::new(
            C64::new(0.6, 0.0),
            C64::new(0.0, -0.8),
            C64::new(0.0, -0.8),
            C64::new(0.6, 0.0),
        );
        pure.apply_spin_operator(1, &u);
        dens.apply_spin_operator(1, &u);
        let diff = (pure.to_density().as_density().unwrap() - dens.as_density().unwrap()).norm();
        assert!(diff < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let s = HilbertSpace::new(&[2], 1).unwrap();
        let st = fock_state(&s, &[1], &[Spin::Up]).unwrap();
        let json = serde_json::to_string(&st).unwrap();
        assert!(json.contains(r#""representation":"pure""#));
        let back: SpinMotionState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, st);
        let dj = serde_json::to_string(&st.to_density()).unwrap();
        let db: SpinMotionState = serde_json::from_str(&dj).unwrap();
        assert_eq!(db, st.to_density());
    }

    #[test]
    fn zero_state_cannot_be_renormalized() {
        let s = HilbertSpace::new(&[2], 1).unwrap();
        let z = SpinMotionState::from_pure(s, DVector::zeros(4)).unwrap();
        assert!(matches!(z.normalized(), Err(Error::Numerical(_))));
    }
}
