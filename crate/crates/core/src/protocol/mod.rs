//! Pulse sequences: rotations, SDR blocks, selective-decoupling schedules,
//! Ramsey runs on the simulator, filter plans and calibrations.

mod calibrate;
mod filter;
mod rotation;
mod schedule;
mod sequence;

pub use calibrate::{
    calibrate_offset, calibrate_tpi, OffsetCalibration, SinusoidFit, TpiCalibration, DEFAULT_SCAN_POINTS, DEFAULT_T_CAL};
pub use filter::{
    binary_filter_plan, min_bits, multimode_filter_plan, parallel_filter_plan, parity_filter_plan, FilterPlan, FilterRound,
    FilterStep, PhaseMode,
};
pub use rotation::{lift_spin_operator, sdr_diagonal, sdr_unitary, spin_rotation, RotationAxis};
pub use schedule::{effective_chi, schedule_selective_decoupling, stark_phase, DetuningChoice, RamseySpec};
pub use sequence::{ramsey_sequence, Engine, PulseOp, PulseSequence, SimulatedSystem, StepScheduler};
