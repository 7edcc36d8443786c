//! Photon-count readout, mid-circuit filtering with collapse, and the
//! event-conditioned single-shot population estimator.

mod detection;
mod ledger;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{Spin, SpinMotionState};
use crate::protocol::{FilterStep, SimulatedSystem};

pub use detection::{detect_spin, poisson_cdf, reset_spins, Detection, DetectionModel};
pub use ledger::{
    estimate_population, EstimateFactor, EventLedger, LedgerReport, PopulationEstimate, StepReport,
};

/// Default shot count of a single-shot run.
pub const DEFAULT_SHOTS: u64 = 500;

#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Pass decision under the strict threshold (event A).
    pub pass: bool,
    /// Dark assignment under the discrimination threshold (event B).
    pub dark: bool,
    pub detection: Detection,
    /// Post-measurement state with the spins re-prepared in |↓⟩.
    pub state: SpinMotionState,
}

/// Applies `V(θ_ℓ, φ_ℓ)`, reads out every ion and records both threshold decisions.
pub fn run_filter_step<R: Rng + ?Sized>(
    system: &SimulatedSystem,
    state: &SpinMotionState,
    step: &FilterStep,
    model: &DetectionModel,
    rng: &mut R,
) -> Result<StepOutcome> {
    let evolved = system.sdr_block(state, &step.theta, step.phi)?;
    let detection = detect_spin(&evolved, model, rng)?;
    let (pass, dark) = match step.keep_outcome {
        Spin::Down => (detection.passes(model), detection.reads_dark(model)),
        Spin::Up => (
            detection.counts.iter().all(|&c| c > model.threshold_discriminate),
            detection.counts.iter().all(|&c| c > model.threshold_pass),
        ),
    };
    let state = reset_spins(&detection.state, &detection.spins);
    Ok(StepOutcome {
        pass,
        dark,
        detection,
        state,
    })
}

/// Born probability that every ion ends in `step.keep_outcome` (perfect readout).
pub fn filter_pass_probability(system: &SimulatedSystem, state: &SpinMotionState, step: &FilterStep) -> Result<f64> {
    let evolved = system.sdr_block(state, &step.theta, step.phi)?;
    let probs = evolved.spin_string_probabilities();
    let n = state.space().spin_count();
    let idx = match step.keep_outcome {
        Spin::Down => 0,
        Spin::Up => (1usize << n) - 1,
    };
    Ok(probs[idx])
}

/// Ideal postselected state after one step (normalized ↓ branch, spins reset).
pub fn postselect(system: &SimulatedSystem, state: &SpinMotionState, step: &FilterStep) -> Result<(f64, SpinMotionState)> {
    let mut branch = system.sdr_block(state, &step.theta, step.phi)?;
    let norm = branch.norm_sqr();
    for ion in 0..state.space().spin_count() {
        branch = branch.project_spin(ion, step.keep_outcome).1;
    }
    let p = branch.norm_sqr() / norm;
    let out = branch.normalized()?;
    let spins = vec![step.keep_outcome; state.space().spin_count()];
    Ok((p, reset_spins(&out, &spins)))
}

/// One shot: runs steps until the first failed pass decision.
fn run_shot(
    system: &SimulatedSystem,
    initial: &SpinMotionState,
    steps: &[FilterStep],
    model: &DetectionModel,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(bool, bool)>> {
    let mut state = initial.clone();
    let mut events = Vec::with_capacity(steps.len());
    for step in steps {
        let out = run_filter_step(system, &state, step, model, rng)?;
        events.push((out.pass, out.dark));
        if !out.pass {
            break;
        }
        state = out.state;
    }
    Ok(events)
}

/// Independent stream per shot: `ChaCha8(seed)` with stream index `shot`.
pub fn shot_rng(seed: u64, shot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot);
    rng
}

/// Monte Carlo over `shots` repetitions of the full filter sequence.
/// Results depend only on `(seed, shots)`, not on the thread count.
pub fn single_shot_measure(
    system: &SimulatedSystem,
    initial: &SpinMotionState,
    steps: &[FilterStep],
    shots: u64,
    model: &DetectionModel,
    seed: u64,
) -> Result<EventLedger> {
    if shots == 0 {
        return Err(Error::invalid("at least one shot is required"));
    }
    let n = steps.len();
    (0..shots)
        .into_par_iter()
        .map(|shot| run_shot(system, initial, steps, model, &mut shot_rng(seed, shot)))
        .try_fold(
            || EventLedger::new(n, seed),
            |mut ledger, events| {
                ledger.record(&events?)?;
                Ok(ledger)
            },
        )
        .try_reduce(|| EventLedger::new(n, seed), |a, b| a.merge(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ModeSpec;
    use crate::fock::{cat_state, coherent_state, fock_state, HilbertSpace, Parity};
    use crate::protocol::{binary_filter_plan, parity_filter_plan, Engine, PhaseMode};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64 as C64;
    use std::f64::consts::PI;

    fn system(dim: usize) -> SimulatedSystem {
        let space = HilbertSpace::new(&[dim], 1).unwrap();
        let modes = vec![ModeSpec::new(2.0 * PI * 0.94e6, 0.1).unwrap()];
        SimulatedSystem::new(space, modes, Engine::Ideal).unwrap()
    }

    #[test]
    fn parity_step_probabilities() {
        let sys = system(25);
        let even = parity_filter_plan(1, &[0], Parity::Even).unwrap();
        let odd = parity_filter_plan(1, &[0], Parity::Odd).unwrap();
        let coh = coherent_state(&sys.space, &[C64::from(1.5)], &[Spin::Down]).unwrap();
        let p = filter_pass_probability(&sys, &coh, &even).unwrap();
        assert_abs_diff_eq!(p, 0.5 * (1.0 + (-4.5f64).exp()), epsilon = 1e-6);
        let (_, post) = postselect(&sys, &coh, &even).unwrap();
        assert_abs_diff_eq!(post.parity(&[0]), 1.0, epsilon = 1e-9);
        let cat = cat_state(&sys.space, C64::from(1.5), Parity::Even, 0, &[Spin::Down]).unwrap();
        assert_abs_diff_eq!(filter_pass_probability(&sys, &cat, &even).unwrap(), cat.norm_sqr(), epsilon = 1e-12);
        let two = fock_state(&sys.space, &[2], &[Spin::Down]).unwrap();
        assert_abs_diff_eq!(filter_pass_probability(&sys, &two, &odd).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn prepared_target_always_passes() {
        let sys = system(8);
        let plan = binary_filter_plan(1, 5, 0, 3, PhaseMode::Exact).unwrap();
        let st = fock_state(&sys.space, &[5], &[Spin::Down]).unwrap();
        let l = single_shot_measure(&sys, &st, &plan.steps, 200, &DetectionModel::perfect(), 1).unwrap();
        assert_eq!(l.a, vec![200; 3]);
        assert_eq!(estimate_population(&l).value, 1.0);
        let flipped = fock_state(&sys.space, &[4], &[Spin::Down]).unwrap();
        let l = single_shot_measure(&sys, &flipped, &plan.steps, 200, &DetectionModel::perfect(), 1).unwrap();
        assert_eq!(l.b[0], 0);
        assert_eq!(estimate_population(&l).value, 0.0);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let sys = system(10);
        let plan = binary_filter_plan(1, 3, 0, 3, PhaseMode::Exact).unwrap();
        let coh = coherent_state(&sys.space, &[C64::from(1.2)], &[Spin::Down]).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| single_shot_measure(&sys, &coh, &plan.steps, 300, &DetectionModel::default(), 9).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
