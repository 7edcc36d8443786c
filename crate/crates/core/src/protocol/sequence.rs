use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rotation::{sdr_diagonal, spin_rotation, RotationAxis};
use super::schedule::{schedule_selective_decoupling, DetuningChoice, RamseySpec};
use crate::dynamics::{
    build_hamiltonian, dephase, second_order_energies, DriveSegment, HamiltonianOptions, ModeSpec, Propagator,
    StarkMode,
};
use crate::error::{Error, Result};
use crate::fock::{HilbertSpace, Spin, SpinMotionState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PulseOp {
    /// Carrier rotation on every ion.
    Rotation { axis: RotationAxis, angle: f64 },
    /// Sideband drive starting at `t0` on the continuous drive clock.
    Drive { segment: DriveSegment, t0: f64 },
    Measure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub ops: Vec<PulseOp>,
}

/// `R_{φ+φ_off+π}(π/2) U⁽²⁾ R_y(π) U⁽¹⁾ R_x(π/2)` followed by a measurement marker.
/// The extra π on the final axis makes the vacuum return to |↓⟩.
pub fn ramsey_sequence(spec: &RamseySpec) -> PulseSequence {
    ramsey_sequence_with_offset(spec, 0.0)
}

fn ramsey_sequence_with_offset(spec: &RamseySpec, extra_phase: f64) -> PulseSequence {
    let [s1, s2] = spec.segments;
    PulseSequence {
        ops: vec![
            PulseOp::Rotation {
                axis: RotationAxis::X,
                angle: PI / 2.0,
            },
            PulseOp::Drive { segment: s1, t0: 0.0 },
            PulseOp::Rotation {
                axis: spec.echo,
                angle: PI,
            },
            PulseOp::Drive {
                segment: s2,
                t0: s1.duration,
            },
            PulseOp::Rotation {
                axis: RotationAxis::Phi(final_axis(spec.phi + spec.phi_off + extra_phase)),
                angle: PI / 2.0,
            },
            PulseOp::Measure,
        ],
    }
}

fn final_axis(phase: f64) -> f64 {
    (phase + PI).rem_euclid(2.0 * PI)
}

/// How the two drive segments are propagated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Engine {
    /// Exact `SDR(θ)·R_z(φ_off)` in place of the echo pair.
    Ideal,
    /// Diagonal second-order energies.
    Effective { nonlinear: bool },
    /// Exact propagation of the sideband Hamiltonian.
    FullJc { nonlinear: bool },
}

/// Drive settings used to turn a bare `(θ, φ)` request into a [`RamseySpec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepScheduler {
    pub omega_rabi: f64,
    pub choice: DetuningChoice,
}

impl StepScheduler {
    pub fn spec_for(&self, modes: &[ModeSpec], theta: &[f64], phi: f64) -> Result<RamseySpec> {
        let targets: Vec<Option<f64>> = theta.iter().map(|&t| (t != 0.0).then_some(t)).collect();
        Ok(schedule_selective_decoupling(modes, &targets, self.omega_rabi, self.choice)?.with_phi(phi))
    }
}

type CacheKey = (u8, u64, u64);

/// Simulated trapped-ion register used by the Ramsey, filter and calibration routines.
#[derive(Debug)]
pub struct SimulatedSystem {
    pub space: HilbertSpace,
    pub modes: Vec<ModeSpec>,
    pub engine: Engine,
    pub stark: StarkMode,
    /// Per-mode base dephasing rates γ_j (1/s); `None` keeps the evolution unitary.
    pub gammas: Option<Vec<f64>>,
    /// Uncompensated σ_z shift Δ_res (rad/s), injected through the echo so that
    /// it accumulates an angle `Δ_res·t` over a sequence of total time `t`.
    pub residual_shift: f64,
    /// Calibrated phase slope Δ_off (rad/s) added to the final pulse phase as `Δ_off·t`.
    pub offset_slope: f64,
    pub scheduler: Option<StepScheduler>,
    cache: Mutex<HashMap<CacheKey, Arc<Propagator>>>,
}

impl Clone for SimulatedSystem {
    fn clone(&self) -> Self {
        Self {
            space: self.space.clone(),
            modes: self.modes.clone(),
            engine: self.engine,
            stark: self.stark,
            gammas: self.gammas.clone(),
            residual_shift: self.residual_shift,
            offset_slope: self.offset_slope,
            scheduler: self.scheduler,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl SimulatedSystem {
    pub fn new(space: HilbertSpace, modes: Vec<ModeSpec>, engine: Engine) -> Result<Self> {
        if modes.len() != space.num_modes() {
            return Err(Error::invalid(format!(
                "{} mode spec(s) for a {}-mode space",
                modes.len(),
                space.num_modes()
            )));
        }
        Ok(Self {
            space,
            modes,
            engine,
            stark: StarkMode::Off,
            gammas: None,
            residual_shift: 0.0,
            offset_slope: 0.0,
            scheduler: None,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_stark(mut self, stark: StarkMode) -> Self {
        self.stark = stark;
        self.cache.get_mut().expect("cache lock").clear();
        self
    }

    pub fn with_gammas(mut self, gammas: Vec<f64>) -> Result<Self> {
        if gammas.len() != self.modes.len() || gammas.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::invalid("one non-negative decay rate per mode required"));
        }
        self.gammas = Some(gammas);
        Ok(self)
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self.cache.get_mut().expect("cache lock").clear();
        self
    }

    pub fn with_residual_shift(mut self, shift: f64) -> Self {
        self.residual_shift = shift;
        self
    }

    pub fn with_offset_slope(mut self, slope: f64) -> Self {
        self.offset_slope = slope;
        self
    }

    pub fn with_scheduler(mut self, scheduler: StepScheduler) -> Self {
        self.scheduler = Some(scheduler);
        self
    }

    fn check_state(&self, state: &SpinMotionState) -> Result<()> {
        if state.space() != &self.space {
            return Err(Error::invalid("state does not live in the simulator's space"));
        }
        Ok(())
    }

    fn rotate_all(&self, state: &mut SpinMotionState, axis: RotationAxis, angle: f64) {
        let u = spin_rotation(axis, angle);
        for ion in 0..self.space.spin_count() {
            state.apply_spin_operator(ion, &u);
        }
    }

    fn sz_total(&self, idx: usize) -> f64 {
        let (s, _) = self.space.split(idx);
        (0..self.space.spin_count()).map(|i| self.space.spin_of(s, i).sz()).sum()
    }

    fn propagator(&self, segment: &DriveSegment, nonlinear: bool) -> Result<Arc<Propagator>> {
        let key = (
            matches!(segment.sideband, crate::dynamics::Sideband::Blue) as u8,
            segment.omega_rabi.to_bits(),
            segment.carrier_detuning.to_bits(),
        );
        if let Some(p) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let h = build_hamiltonian(
            &self.space,
            &self.modes,
            segment,
            HamiltonianOptions {
                nonlinear,
                stark: self.stark,
            },
        )?;
        let p = Arc::new(Propagator::new(&h));
        self.cache.lock().expect("cache lock").insert(key, p.clone());
        Ok(p)
    }

    /// Diagonal second-order energies of one segment, summed over ions.
    fn effective_energies(&self, segment: &DriveSegment, nonlinear: bool) -> Vec<f64> {
        let md = self.space.motional_dim();
        let per_n: Vec<(f64, f64)> = (0..md)
            .map(|m| second_order_energies(&self.space.occupation(m), &self.modes, segment, nonlinear))
            .collect();
        let stark = if self.stark == StarkMode::Off {
            0.0
        } else {
            segment.stark_shift()
        };
        (0..self.space.dim())
            .map(|idx| {
                let (s, m) = self.space.split(idx);
                let (down, up) = per_n[m];
                let spin_part: f64 = (0..self.space.spin_count())
                    .map(|i| match self.space.spin_of(s, i) {
                        Spin::Down => down,
                        Spin::Up => up,
                    })
                    .sum();
                spin_part + stark * self.sz_total(idx)
            })
            .collect()
    }

    fn apply_residual(&self, state: &mut SpinMotionState, coefficient: f64, t: f64) {
        if coefficient == 0.0 || t == 0.0 {
            return;
        }
        let d: Vec<C64> = (0..self.space.dim())
            .map(|idx| C64::from_polar(1.0, -coefficient * self.sz_total(idx) * t))
            .collect();
        state.apply_diagonal(&d);
    }

    fn drive(&self, state: &mut SpinMotionState, segment: &DriveSegment, t0: f64, residual: f64) -> Result<()> {
        let t = segment.duration;
        match self.engine {
            Engine::FullJc { nonlinear } => self.propagator(segment, nonlinear)?.apply(state, t0, t),
            Engine::Effective { nonlinear } => {
                let d: Vec<C64> = self
                    .effective_energies(segment, nonlinear)
                    .iter()
                    .map(|e| C64::from_polar(1.0, -e * t))
                    .collect();
                state.apply_diagonal(&d);
            }
            Engine::Ideal => {
                let d: Vec<C64> = self
                    .effective_energies(segment, false)
                    .iter()
                    .map(|e| C64::from_polar(1.0, -e * t))
                    .collect();
                state.apply_diagonal(&d);
            }
        }
        self.apply_residual(state, residual, t);
        Ok(())
    }

    /// Runs an arbitrary pulse sequence. Drives use the configured engine
    /// (the ideal engine falls back to linear second-order energies).
    pub fn execute(&self, state: &SpinMotionState, sequence: &PulseSequence) -> Result<SpinMotionState> {
        self.check_state(state)?;
        let mut out = state.clone();
        for op in &sequence.ops {
            match op {
                PulseOp::Rotation { axis, angle } => self.rotate_all(&mut out, *axis, *angle),
                PulseOp::Drive { segment, t0 } => self.drive(&mut out, segment, *t0, 0.0)?,
                PulseOp::Measure => break,
            }
        }
        Ok(out)
    }

    /// Echo pair `U⁽²⁾ R_y(π) U⁽¹⁾` including residual shift and Stark handling.
    fn echo_pair(&self, state: &mut SpinMotionState, spec: &RamseySpec) -> Result<()> {
        let [s1, s2] = &spec.segments;
        if self.engine == Engine::Ideal {
            self.rotate_all(state, spec.echo, PI);
            let mut d = sdr_diagonal(&self.space, &spec.theta_target);
            let t = spec.total_time();
            let mut z = spec.phi_off + self.residual_shift * t;
            if self.stark != StarkMode::Off {
                z += spec.stark_phase();
            }
            for (idx, x) in d.iter_mut().enumerate() {
                *x *= C64::from_polar(1.0, -z * self.sz_total(idx) / 2.0);
            }
            state.apply_diagonal(&d);
            return Ok(());
        }
        self.drive(state, s1, 0.0, -self.residual_shift / 2.0)?;
        self.rotate_all(state, spec.echo, PI);
        self.drive(state, s2, s1.duration, self.residual_shift / 2.0)
    }

    /// Final state of `V(θ, φ)` before the spin measurement, with an extra
    /// final-pulse phase on top of the calibrated `Δ_off·t`.
    pub fn ramsey_state_with_phase(
        &self,
        state: &SpinMotionState,
        spec: &RamseySpec,
        extra_phase: f64,
    ) -> Result<SpinMotionState> {
        self.check_state(state)?;
        if spec.modes.len() != self.modes.len() {
            return Err(Error::invalid("Ramsey spec and simulator disagree on the mode count"));
        }
        let mut out = state.clone();
        self.rotate_all(&mut out, RotationAxis::X, PI / 2.0);
        self.echo_pair(&mut out, spec)?;
        if let Some(g) = &self.gammas {
            out = dephase(&out.to_density(), g, spec.total_time())?;
        }
        let phase = spec.phi + spec.phi_off + self.offset_slope * spec.total_time() + extra_phase;
        self.rotate_all(&mut out, RotationAxis::Phi(final_axis(phase)), PI / 2.0);
        Ok(out)
    }

    pub fn ramsey_state(&self, state: &SpinMotionState, spec: &RamseySpec) -> Result<SpinMotionState> {
        self.ramsey_state_with_phase(state, spec, 0.0)
    }

    /// Probability that ion 0 ends in |↑⟩.
    pub fn ramsey_p_up(&self, state: &SpinMotionState, spec: &RamseySpec) -> Result<f64> {
        Ok(self.ramsey_state(state, spec)?.spin_probability(0, Spin::Up))
    }

    /// `P_↑` at each total interaction time, keeping this sequence's detunings.
    pub fn ramsey_trace(&self, state: &SpinMotionState, spec: &RamseySpec, times: &[f64]) -> Result<Vec<f64>> {
        times
            .par_iter()
            .map(|&t| self.ramsey_p_up(state, &spec.at_total_time(t)))
            .collect()
    }

    /// `V(θ, φ)` for a bare angle request. The ideal engine uses `θ` exactly;
    /// other engines schedule it with the attached [`StepScheduler`].
    pub fn sdr_block(&self, state: &SpinMotionState, theta: &[f64], phi: f64) -> Result<SpinMotionState> {
        let spec = self.spec_for(theta, phi)?;
        self.ramsey_state(state, &spec)
    }

    pub fn spec_for(&self, theta: &[f64], phi: f64) -> Result<RamseySpec> {
        if theta.len() != self.modes.len() {
            return Err(Error::invalid("one SDR angle per mode required"));
        }
        match (self.engine, &self.scheduler) {
            (Engine::Ideal, _) => Ok(RamseySpec::ideal(self.modes.clone(), theta.to_vec(), phi)),
            (_, Some(s)) => s.spec_for(&self.modes, theta, phi),
            (_, None) => Err(Error::invalid("a step scheduler is required outside the ideal engine")),
        }
    }
}
