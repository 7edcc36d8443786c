use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::fock::HilbertSpace;

/// Rotation axis for `R_α(θ) = exp(−iσ_α θ/2)`; `Phi(φ)` is `cos φ σ_x + sin φ σ_y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationAxis {
    X,
    Y,
    Z,
    Phi(f64),
}

/// 2×2 rotation in the (↓, ↑) basis, with σ_z|↑⟩ = +|↑⟩ and σ_+ = |↑⟩⟨↓|.
pub fn spin_rotation(axis: RotationAxis, angle: f64) -> Matrix2<C64> {
    let c = C64::from((angle / 2.0).cos());
    let s = (angle / 2.0).sin();
    let mi = C64::new(0.0, -1.0);
    match axis {
        RotationAxis::Z => Matrix2::new(
            C64::from_polar(1.0, angle / 2.0),
            C64::from(0.0),
            C64::from(0.0),
            C64::from_polar(1.0, -angle / 2.0),
        ),
        RotationAxis::X => spin_rotation(RotationAxis::Phi(0.0), angle),
        RotationAxis::Y => spin_rotation(RotationAxis::Phi(std::f64::consts::FRAC_PI_2), angle),
        RotationAxis::Phi(phi) => {
            // σ_φ has ⟨↑|σ_φ|↓⟩ = e^{−iφ} and ⟨↓|σ_φ|↑⟩ = e^{+iφ}.
            let lower = C64::from_polar(1.0, -phi);
            let upper = C64::from_polar(1.0, phi);
            Matrix2::new(c, mi * s * upper, mi * s * lower, c)
        }
    }
}

/// Lifts a single-ion operator to the full space (identity on other ions and motion).
pub fn lift_spin_operator(space: &HilbertSpace, ion: usize, op: &Matrix2<C64>) -> DMatrix<C64> {
    let d = space.dim();
    let md = space.motional_dim();
    let mask = space.ion_mask(ion);
    let mut out = DMatrix::<C64>::zeros(d, d);
    for r in 0..d {
        let (sr, mr) = space.split(r);
        for b in 0..2usize {
            let sc = if b == 1 { sr | mask } else { sr & !mask };
            let a = usize::from(sr & mask != 0);
            out[(r, sc * md + mr)] = op[(a, b)];
        }
    }
    out
}

/// Diagonal of `SDR(θ) = exp(−iσ_z θ·n/2)` summed over all ions.
pub fn sdr_diagonal(space: &HilbertSpace, theta: &[f64]) -> Vec<C64> {
    (0..space.dim())
        .map(|idx| {
            let (s, m) = space.split(idx);
            let tn: f64 = theta
                .iter()
                .enumerate()
                .map(|(j, t)| t * space.occupation_of(m, j) as f64)
                .sum();
            let sz: f64 = (0..space.spin_count()).map(|i| space.spin_of(s, i).sz()).sum();
            C64::from_polar(1.0, -sz * tn / 2.0)
        })
        .collect()
}

pub fn sdr_unitary(space: &HilbertSpace, theta: &[f64]) -> DMatrix<C64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(sdr_diagonal(space, theta)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{fock_state, Spin};
    use std::f64::consts::PI;

    fn close(a: &Matrix2<C64>, b: &Matrix2<C64>) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn rotation_examples() {
        let ry = spin_rotation(RotationAxis::Y, PI);
        // |↓⟩ = (1, 0) → ∝ |↑⟩
        assert!(ry[(0, 0)].norm() < 1e-12 && (ry[(1, 0)].norm() - 1.0).abs() < 1e-12);
        let rx = spin_rotation(RotationAxis::X, PI / 2.0);
        assert!(close(&(rx * rx), &spin_rotation(RotationAxis::X, PI)));
        assert!(close(&spin_rotation(RotationAxis::Phi(0.0), 0.7), &spin_rotation(RotationAxis::X, 0.7)));
        let u = spin_rotation(RotationAxis::Phi(1.3), 0.4);
        assert!(close(&(u * u.adjoint()), &Matrix2::identity()));
    }

    #[test]
    fn z_rotation_matches_generator() {
        // exp(−iσ_zθ/2) with σ_z = diag(−1, +1) in (↓, ↑).
        let rz = spin_rotation(RotationAxis::Z, 0.9);
        assert!((rz[(1, 1)] - C64::from_polar(1.0, -0.45)).norm() < 1e-12);
        assert!((rz[(0, 0)] - C64::from_polar(1.0, 0.45)).norm() < 1e-12);
    }

    #[test]
    fn lifted_matches_in_place() {
        let s = HilbertSpace::new(&[3], 2).unwrap();
        let u = spin_rotation(RotationAxis::Phi(0.3), 1.1);
        let big = lift_spin_operator(&s, 1, &u);
        let mut a = fock_state(&s, &[2], &[Spin::Up, Spin::Down]).unwrap();
        let mut b = a.clone();
        a.apply_spin_operator(1, &u);
        b.apply_operator(&big);
        assert!((a.as_pure().unwrap() - b.as_pure().unwrap()).norm() < 1e-12);
    }

    #[test]
    fn sdr_examples() {
        let s = HilbertSpace::new(&[3, 3], 1).unwrap();
        let id = sdr_unitary(&s, &[0.0, 0.0]);
        assert!((id - DMatrix::identity(s.dim(), s.dim())).norm() < 1e-15);
        let d = sdr_diagonal(&s, &[PI, 0.0]);
        let i = s.index(&[Spin::Up], &[1, 0]).unwrap();
        assert!((d[i] - C64::new(0.0, -1.0)).norm() < 1e-12);
        let d = sdr_diagonal(&s, &[PI, PI]);
        for n1 in 0..3 {
            for n2 in 0..3 {
                let up = s.index(&[Spin::Up], &[n1, n2]).unwrap();
                let down = s.index(&[Spin::Down], &[n1, n2]).unwrap();
                let parity = if (n1 + n2) % 2 == 0 { 1.0 } else { -1.0 };
                assert!((d[up] / d[down] - C64::from(parity)).norm() < 1e-12);
            }
        }
    }
}
