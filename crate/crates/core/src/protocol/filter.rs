use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Parity, Spin};

/// One `V(θ_ℓ, φ_ℓ)` block followed by postselection on `keep_outcome`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterStep {
    pub theta: Vec<f64>,
    /// In `[0, 2π)`.
    pub phi: f64,
    pub keep_outcome: Spin,
}

impl FilterStep {
    pub fn new(theta: Vec<f64>, phi: f64) -> Self {
        Self {
            theta,
            phi: phi.rem_euclid(2.0 * PI),
            keep_outcome: Spin::Down,
        }
    }

    /// Ideal probability that Fock state `n` yields `keep_outcome`:
    /// `P_↑ = ½ − ½cos(θ·n − φ)`.
    pub fn pass_probability(&self, n: &[usize]) -> f64 {
        let x: f64 = self.theta.iter().zip(n).map(|(t, &k)| t * k as f64).sum::<f64>() - self.phi;
        let up = 0.5 - 0.5 * x.cos();
        match self.keep_outcome {
            Spin::Down => 1.0 - up,
            Spin::Up => up,
        }
    }
}

/// Phase convention for binary filtering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// `φ_ℓ = π n*/2^ℓ mod 2π`: the target passes every step with certainty.
    #[default]
    Exact,
    /// `φ_ℓ = b_ℓ π`, the bit value alone.
    BitValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterPlan {
    pub steps: Vec<FilterStep>,
    pub target: Vec<usize>,
    /// Mode addressed by each step.
    pub mode_assignment: Vec<usize>,
    /// Bit index ℓ of each step.
    pub bit_index: Vec<usize>,
    pub bits: Vec<usize>,
    pub phase_mode: PhaseMode,
}

impl FilterPlan {
    /// Ideal probability that Fock state `n` passes every step.
    pub fn pass_probability(&self, n: &[usize]) -> f64 {
        self.steps.iter().map(|s| s.pass_probability(n)).product()
    }
}

/// Parity filter over the modes in `mode_mask`: θ = π on masked modes,
/// φ = 0 keeps the even sector and φ = π the odd one.
pub fn parity_filter_plan(num_modes: usize, mode_mask: &[usize], sector: Parity) -> Result<FilterStep> {
    let mut theta = vec![0.0; num_modes];
    for &j in mode_mask {
        *theta
            .get_mut(j)
            .ok_or_else(|| Error::invalid(format!("mode {j} out of range for {num_modes} mode(s)")))? = PI;
    }
    let phi = match sector {
        Parity::Even => 0.0,
        Parity::Odd => PI,
    };
    Ok(FilterStep::new(theta, phi))
}

fn bit_phase(target: usize, bit: usize, mode: PhaseMode) -> f64 {
    match mode {
        PhaseMode::Exact => {
            // π n*/2^ℓ mod 2π depends only on n* mod 2^{ℓ+1}.
            let r = target % (1usize << (bit + 1));
            PI * r as f64 / (1u64 << bit) as f64
        }
        PhaseMode::BitValue => PI * ((target >> bit) & 1) as f64,
    }
}

fn check_bits(target: usize, bits: usize) -> Result<()> {
    if bits == 0 || bits >= usize::BITS as usize || target >= (1usize << bits) {
        return Err(Error::Bits { target, bits });
    }
    Ok(())
}

/// Steps ℓ = 0…m−1 with θ_ℓ = π/2^ℓ on `mode`.
pub fn binary_filter_plan(
    num_modes: usize,
    target: usize,
    mode: usize,
    bits: usize,
    phase_mode: PhaseMode,
) -> Result<FilterPlan> {
    if mode >= num_modes {
        return Err(Error::invalid(format!("mode {mode} out of range for {num_modes} mode(s)")));
    }
    check_bits(target, bits)?;
    let steps = (0..bits)
        .map(|l| {
            let mut theta = vec![0.0; num_modes];
            theta[mode] = PI / (1u64 << l) as f64;
            FilterStep::new(theta, bit_phase(target, l, phase_mode))
        })
        .collect();
    let mut full_target = vec![0; num_modes];
    full_target[mode] = target;
    let mut all_bits = vec![0; num_modes];
    all_bits[mode] = bits;
    Ok(FilterPlan {
        steps,
        target: full_target,
        mode_assignment: vec![mode; bits],
        bit_index: (0..bits).collect(),
        bits: all_bits,
        phase_mode,
    })
}

/// Mode-by-mode concatenation of binary plans; modes with zero bits are skipped.
pub fn multimode_filter_plan(targets: &[usize], bits: &[usize], phase_mode: PhaseMode) -> Result<FilterPlan> {
    if targets.len() != bits.len() || targets.is_empty() {
        return Err(Error::invalid("one bit count per target mode required"));
    }
    let m = targets.len();
    let mut plan = FilterPlan {
        steps: Vec::new(),
        target: targets.to_vec(),
        mode_assignment: Vec::new(),
        bit_index: Vec::new(),
        bits: bits.to_vec(),
        phase_mode,
    };
    for (j, (&t, &b)) in targets.iter().zip(bits).enumerate() {
        if b == 0 {
            if t != 0 {
                return Err(Error::Bits { target: t, bits: 0 });
            }
            continue;
        }
        let p = binary_filter_plan(m, t, j, b, phase_mode)?;
        plan.steps.extend(p.steps);
        plan.mode_assignment.extend(p.mode_assignment);
        plan.bit_index.extend(p.bit_index);
    }
    Ok(plan)
}

/// Bits needed to write `n` (at least one).
pub fn min_bits(n: usize) -> usize {
    (usize::BITS - n.leading_zeros()).max(1) as usize
}

/// Conditions measured together in one joint spin readout; entry `i` runs on ion `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterRound {
    pub conditions: Vec<FilterStep>,
    pub modes: Vec<usize>,
    pub bit_index: Vec<usize>,
}

/// Packs the `Σ_j m_j` binary conditions (with `m_j` the bit length of
/// `targets[j]`) into `⌈Σ_j m_j / N⌉` rounds of at most `N` conditions.
pub fn parallel_filter_plan(targets: &[usize], n_ions: usize, phase_mode: PhaseMode) -> Result<Vec<FilterRound>> {
    if n_ions == 0 {
        return Err(Error::invalid("at least one ion is required"));
    }
    let bits: Vec<usize> = targets.iter().map(|&n| min_bits(n)).collect();
    let plan = multimode_filter_plan(targets, &bits, phase_mode)?;
    let n = plan.steps.len();
    Ok((0..n)
        .step_by(n_ions)
        .map(|start| {
            let end = (start + n_ions).min(n);
            FilterRound {
                conditions: plan.steps[start..end].to_vec(),
                modes: plan.mode_assignment[start..end].to_vec(),
                bit_index: plan.bit_index[start..end].to_vec(),
            }
        })
        .collect())
}
