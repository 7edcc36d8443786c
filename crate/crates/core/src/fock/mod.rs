//! Truncated spin ⊗ multimode Fock spaces, states and standard constructors.

mod distribution;
mod space;
mod state;
mod states;

pub use distribution::{occupation_key, parse_occupation_key, FockDistribution};
pub(crate) use distribution::parity_sign;
pub use space::{HilbertSpace, Spin};
pub use state::{Representation, SpinMotionState, NUMERICAL_FLOOR};
pub use states::{
    cat_state, cat_state_with_threshold, coherent_amplitudes, coherent_state,
    coherent_state_with_threshold, ecs_state, ecs_state_with_threshold, fock_state, mixture,
    truncation_leakage, Parity, DEFAULT_LEAKAGE_THRESHOLD,
};

/// Constructs a space with the default dimension cap.
pub fn make_space(mode_dims: &[usize], spin_count: usize) -> crate::Result<HilbertSpace> {
    HilbertSpace::new(mode_dims, spin_count)
}

/// Motional populations of a state (spin traced out).
pub fn fock_populations(state: &SpinMotionState) -> FockDistribution {
    state.populations()
}
