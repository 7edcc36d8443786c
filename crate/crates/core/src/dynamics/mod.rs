//! Sideband Hamiltonians, dispersive coefficients and segment-wise evolution.

mod dispersive;
mod evolve;
mod hamiltonian;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dispersive::{
    dispersive_coefficients, multi_ion_model, nonlinear_phase, nonlinear_weight, second_order_energies,
    spin_independent_shift, DispersiveCoefficients, IonParams, MultiIonModel,
    VALIDITY_WARN_RATIO,
};
pub use evolve::{dephase, decay_rate, evolve_segment, evolve_segment_at, Propagator};
pub use hamiltonian::{
    build_hamiltonian, jc_frame_hamiltonian, nonlinear_jc_hamiltonian, HamiltonianOptions,
    NonlinearFactors, SegmentHamiltonian, StarkMode,
};

/// One motional mode: secular frequency `omega` (rad/s) and Lamb-Dicke parameter `eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub omega: f64,
    pub eta: f64,
}

impl ModeSpec {
    pub fn new(omega: f64, eta: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::invalid(format!("mode frequency must be positive, got {omega}")));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid(format!("Lamb-Dicke parameter must lie in (0, 1), got {eta}")));
        }
        Ok(Self { omega, eta })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sideband {
    Red,
    Blue,
}

impl Sideband {
    /// `+1` for red, `−1` for blue: the sign of `H₀ = ±Σ δ_j n_j`.
    pub fn sign(self) -> f64 {
        match self {
            Sideband::Red => 1.0,
            Sideband::Blue => -1.0,
        }
    }
}

/// A constant-amplitude sideband drive of fixed carrier detuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSegment {
    pub sideband: Sideband,
    /// Carrier Rabi frequency Ω (rad/s).
    pub omega_rabi: f64,
    /// Detuning Δ from the carrier (rad/s).
    pub carrier_detuning: f64,
    /// Duration (s).
    pub duration: f64,
}

impl DriveSegment {
    pub fn new(sideband: Sideband, omega_rabi: f64, carrier_detuning: f64, duration: f64) -> Result<Self> {
        if !(omega_rabi >= 0.0 && omega_rabi.is_finite()) {
            return Err(Error::invalid(format!("Rabi frequency must be non-negative, got {omega_rabi}")));
        }
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::invalid(format!("duration must be non-negative, got {duration}")));
        }
        if !carrier_detuning.is_finite() {
            return Err(Error::invalid("carrier detuning must be finite"));
        }
        Ok(Self {
            sideband,
            omega_rabi,
            carrier_detuning,
            duration,
        })
    }

    /// Drive placed `delta` away from the chosen sideband of `mode`.
    pub fn from_sideband_detuning(
        sideband: Sideband,
        mode: &ModeSpec,
        delta: f64,
        omega_rabi: f64,
        duration: f64,
    ) -> Result<Self> {
        let carrier = match sideband {
            Sideband::Red => delta - mode.omega,
            Sideband::Blue => delta + mode.omega,
        };
        Self::new(sideband, omega_rabi, carrier, duration)
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    /// `δ_j = Δ + ω_j` (red) or `Δ − ω_j` (blue).
    pub fn sideband_detuning(&self, mode: &ModeSpec) -> f64 {
        match self.sideband {
            Sideband::Red => self.carrier_detuning + mode.omega,
            Sideband::Blue => self.carrier_detuning - mode.omega,
        }
    }

    pub fn sideband_detunings(&self, modes: &[ModeSpec]) -> Vec<f64> {
        modes.iter().map(|m| self.sideband_detuning(m)).collect()
    }

    /// Sideband coupling `g_j = η_j Ω / 2`.
    pub fn coupling(&self, mode: &ModeSpec) -> f64 {
        0.5 * mode.eta * self.omega_rabi
    }

    /// Carrier AC-Stark coefficient `−Ω²/(4Δ)` multiplying σ_z.
    pub fn stark_shift(&self) -> f64 {
        if self.carrier_detuning == 0.0 {
            0.0
        } else {
            -self.omega_rabi * self.omega_rabi / (4.0 * self.carrier_detuning)
        }
    }
}
