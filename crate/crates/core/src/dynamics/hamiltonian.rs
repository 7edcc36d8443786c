use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{DriveSegment, ModeSpec, Sideband};
use crate::error::{Error, Result};
use crate::fock::HilbertSpace;
use crate::special::{laguerre_f, spectator_b};

/// Where the carrier AC-Stark term enters a segment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StarkMode {
    #[default]
    Off,
    /// Applied as `exp(−i s σ_z t)` after the sideband propagator.
    Analytic,
    /// Added to the Hamiltonian matrix before diagonalization.
    InHamiltonian,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HamiltonianOptions {
    pub nonlinear: bool,
    pub stark: StarkMode,
}

/// Tabulated `f_j(n)`, `B_j(n)` and spectator products `M_j(n)` over a space.
#[derive(Clone, Debug)]
pub struct NonlinearFactors {
    pub f_table: Vec<Vec<f64>>,
    pub b_table: Vec<Vec<f64>>,
    /// `m_table[j][motional_index]`.
    pub m_table: Vec<Vec<f64>>,
}

impl NonlinearFactors {
    pub fn new(space: &HilbertSpace, modes: &[ModeSpec]) -> Self {
        let dims = space.mode_dims();
        // One extra level so couplings out of the top state can be tabulated.
        let f_table: Vec<Vec<f64>> = modes
            .iter()
            .zip(dims)
            .map(|(m, &d)| (0..=d).map(|n| laguerre_f(n, m.eta)).collect())
            .collect();
        let b_table: Vec<Vec<f64>> = modes
            .iter()
            .zip(dims)
            .map(|(m, &d)| (0..=d).map(|n| spectator_b(n, m.eta)).collect())
            .collect();
        let m_table = (0..modes.len())
            .map(|j| {
                (0..space.motional_dim())
                    .map(|mi| {
                        (0..modes.len())
                            .filter(|&l| l != j)
                            .map(|l| b_table[l][space.occupation_of(mi, l)])
                            .product()
                    })
                    .collect()
            })
            .collect();
        Self {
            f_table,
            b_table,
            m_table,
        }
    }

    /// Identity factors (linear Lamb-Dicke limit).
    fn unit(space: &HilbertSpace, modes: &[ModeSpec]) -> Self {
        let dims = space.mode_dims();
        Self {
            f_table: dims.iter().map(|&d| vec![1.0; d + 1]).collect(),
            b_table: dims.iter().map(|&d| vec![1.0; d + 1]).collect(),
            m_table: vec![vec![1.0; space.motional_dim()]; modes.len()],
        }
    }
}

/// Time-independent frame Hamiltonian `H = H₀ + V` of one drive segment,
/// with the bookkeeping needed to return to the bare interaction picture.
#[derive(Clone, Debug)]
pub struct SegmentHamiltonian {
    pub matrix: DMatrix<C64>,
    /// Diagonal of `H₀ = ±Σ δ_j n_j`.
    pub frame: Vec<f64>,
    /// Diagonal energies of the analytic Stark factor (zero unless `StarkMode::Analytic`).
    pub analytic_stark: Vec<f64>,
    pub space: HilbertSpace,
}

/// Linear Lamb-Dicke sideband Hamiltonian in the rotating frame.
pub fn jc_frame_hamiltonian(
    space: &HilbertSpace,
    modes: &[ModeSpec],
    segment: &DriveSegment,
    stark: StarkMode,
) -> Result<SegmentHamiltonian> {
    build_hamiltonian(space, modes, segment, HamiltonianOptions { nonlinear: false, stark })
}

/// Sideband Hamiltonian with dressed ladder operators `ã_j = f_j(n_j) a_j M_j`.
pub fn nonlinear_jc_hamiltonian(
    space: &HilbertSpace,
    modes: &[ModeSpec],
    segment: &DriveSegment,
    stark: StarkMode,
) -> Result<SegmentHamiltonian> {
    build_hamiltonian(space, modes, segment, HamiltonianOptions { nonlinear: true, stark })
}

/// All ions couple to every mode with the same Lamb-Dicke parameters.
pub fn build_hamiltonian(
    space: &HilbertSpace,
    modes: &[ModeSpec],
    segment: &DriveSegment,
    opts: HamiltonianOptions,
) -> Result<SegmentHamiltonian> {
    if modes.len() != space.num_modes() {
        return Err(Error::invalid(format!(
            "{} mode spec(s) for a {}-mode space",
            modes.len(),
            space.num_modes()
        )));
    }
    let factors = if opts.nonlinear {
        NonlinearFactors::new(space, modes)
    } else {
        NonlinearFactors::unit(space, modes)
    };
    let deltas = segment.sideband_detunings(modes);
    let sign = segment.sideband.sign();
    let md = space.motional_dim();
    let d = space.dim();
    let stark = segment.stark_shift();

    let mut frame = vec![0.0; d];
    let mut stark_diag = vec![0.0; d];
    for idx in 0..d {
        let (s, m) = space.split(idx);
        frame[idx] = sign
            * (0..modes.len())
                .map(|j| deltas[j] * space.occupation_of(m, j) as f64)
                .sum::<f64>();
        stark_diag[idx] = stark
            * (0..space.spin_count())
                .map(|i| space.spin_of(s, i).sz())
                .sum::<f64>();
    }

    let mut h = DMatrix::<C64>::zeros(d, d);
    for idx in 0..d {
        h[(idx, idx)] = C64::from(frame[idx]);
        if opts.stark == StarkMode::InHamiltonian {
            h[(idx, idx)] += C64::from(stark_diag[idx]);
        }
    }
    for s in 0..space.spin_dim() {
        for ion in 0..space.spin_count() {
            let mask = space.ion_mask(ion);
            if s & mask != 0 {
                continue;
            }
            let s_up = s | mask;
            for m in 0..md {
                for (j, mode) in modes.iter().enumerate() {
                    let g = segment.coupling(mode);
                    let nj = space.occupation_of(m, j);
                    let stride = space.stride(j);
                    let mj = factors.m_table[j][m];
                    // σ_+ pairs |↓,n⟩ with |↑,n+1⟩ (blue) or |↑,n−1⟩ (red).
                    let (target, amp) = match segment.sideband {
                        Sideband::Blue => {
                            if nj + 1 >= space.mode_dims()[j] {
                                continue;
                            }
                            (m + stride, ((nj + 1) as f64).sqrt() * factors.f_table[j][nj])
                        }
                        Sideband::Red => {
                            if nj == 0 {
                                continue;
                            }
                            (m - stride, (nj as f64).sqrt() * factors.f_table[j][nj - 1])
                        }
                    };
                    let val = C64::from(g * amp * mj);
                    let a = s * md + m;
                    let b = s_up * md + target;
                    h[(b, a)] += val;
                    h[(a, b)] += val;
                }
            }
        }
    }

    Ok(SegmentHamiltonian {
        matrix: h,
        frame,
        analytic_stark: if opts.stark == StarkMode::Analytic {
            stark_diag
        } else {
            vec![0.0; d]
        },
        space: space.clone(),
    })
}
