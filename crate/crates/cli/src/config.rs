//! Experiment configuration files and bundled presets.
//!
//! Physical quantities carry their unit in the key: `_hz` keys are ordinary
//! frequencies (converted to rad/s internally), `_s` keys are seconds,
//! `_per_s` keys are rates and `_rad` keys are angles.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use fockshift::dynamics::{ModeSpec, StarkMode};
use fockshift::fock::Parity;
use fockshift::measurement::DetectionModel;
use fockshift::protocol::{DetuningChoice, Engine, PhaseMode, DEFAULT_SCAN_POINTS, DEFAULT_T_CAL};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: &[(&str, &str)] = &[
    ("single_mode", include_str!("../presets/single_mode.toml")),
    ("multimode_1_2", include_str!("../presets/multimode_1_2.toml")),
    ("multimode_1_1", include_str!("../presets/multimode_1_1.toml")),
    ("multimode_2_1", include_str!("../presets/multimode_2_1.toml")),
    ("filtered_even_cat", include_str!("../presets/filtered_even_cat.toml")),
    ("filtered_odd_cat", include_str!("../presets/filtered_odd_cat.toml")),
    ("ecs", include_str!("../presets/ecs.toml")),
    ("single_shot", include_str!("../presets/single_shot.toml")),
];

pub fn hz(f: f64) -> f64 {
    2.0 * PI * f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Repetitions per data point; zero gives exact probabilities.
    #[serde(default)]
    pub shots: u64,
    pub trap: TrapConfig,
    #[serde(default)]
    pub drive: DriveConfig,
    #[serde(default)]
    pub state: StateConfig,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub frequency_hz: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    pub modes: Vec<ModeConfig>,
    /// Fock truncation per mode for the simulation (`n_max + 1`).
    pub fock_dims: Vec<usize>,
    #[serde(default = "one")]
    pub spins: usize,
    /// Base motional dephasing rate per mode; empty keeps evolution unitary.
    #[serde(default)]
    pub gammas_per_s: Vec<f64>,
    #[serde(default)]
    pub residual_shift_hz: f64,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Ideal,
    EffectiveLinear,
    #[default]
    EffectiveNonlinear,
    FullJc,
    FullJcNonlinear,
}

impl EngineKind {
    pub fn engine(self) -> Engine {
        match self {
            EngineKind::Ideal => Engine::Ideal,
            EngineKind::EffectiveLinear => Engine::Effective { nonlinear: false },
            EngineKind::EffectiveNonlinear => Engine::Effective { nonlinear: true },
            EngineKind::FullJc => Engine::FullJc { nonlinear: false },
            EngineKind::FullJcNonlinear => Engine::FullJc { nonlinear: true },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetuningConfig {
    Carrier { delta1_hz: f64, delta2_hz: f64 },
    /// Detunings from the blue sidebands of the named modes (0-based).
    Sideband { mode1: usize, delta1_hz: f64, mode2: usize, delta2_hz: f64 },
    SingleMode { mode: usize, delta_hz: f64 },
    TwoModeRatio,
}

impl Default for DetuningConfig {
    fn default() -> Self {
        DetuningConfig::SingleMode { mode: 0, delta_hz: 110e3 }
    }
}

impl DetuningConfig {
    pub fn choice(self) -> DetuningChoice {
        match self {
            DetuningConfig::Carrier { delta1_hz, delta2_hz } => DetuningChoice::Carrier {
                delta1: hz(delta1_hz),
                delta2: hz(delta2_hz),
            },
            DetuningConfig::Sideband { mode1, delta1_hz, mode2, delta2_hz } => DetuningChoice::Sideband {
                mode1,
                delta1: hz(delta1_hz),
                mode2,
                delta2: hz(delta2_hz),
            },
            DetuningConfig::SingleMode { mode, delta_hz } => DetuningChoice::SingleMode { mode, delta: hz(delta_hz) },
            DetuningConfig::TwoModeRatio => DetuningChoice::TwoModeRatio,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    #[serde(default = "default_rabi")]
    pub rabi_hz: f64,
    #[serde(default)]
    pub detuning: DetuningConfig,
    #[serde(default)]
    pub engine: EngineKind,
    #[serde(default)]
    pub stark: StarkMode,
}

fn default_rabi() -> f64 {
    100e3
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            rabi_hz: default_rabi(),
            detuning: DetuningConfig::default(),
            engine: EngineKind::default(),
            stark: StarkMode::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    Fock { occupation: Vec<usize> },
    Coherent { alpha: Vec<f64> },
    Cat { alpha: f64, parity: Parity, #[serde(default)] mode: usize },
    /// `|α,α⟩ ± |−α,−α⟩` over two modes.
    Ecs { alpha: f64, parity: Parity },
    /// Even and odd cats mixed to the given parity, a parity-impure filter output.
    ParityMixture { alpha: f64, target_parity: f64, #[serde(default)] mode: usize },
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig::Fock { occupation: vec![0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolConfig {
    /// Ramsey traces of the configured state, optionally fitted for populations.
    Ramsey {
        /// `χ_eff,1/χ_eff,2` per trace; empty for one trace. On ratio traces the
        /// second mode dephases at `γ₁/r`, the scaling the population fit assumes.
        #[serde(default)]
        ratios: Vec<f64>,
        #[serde(default = "default_points")]
        time_points: usize,
        /// Trace length in units of `2π/|χ_eff|` of the slowest mode; one unit
        /// sweeps `θ = 2χt` through `4π`.
        #[serde(default = "default_span")]
        span: f64,
        #[serde(default = "yes")]
        fit: bool,
        #[serde(default = "default_fit_n_max")]
        fit_n_max: usize,
        /// Modes entering the reported parity; empty means all.
        #[serde(default)]
        parity_modes: Vec<usize>,
    },
    ParityFilter {
        #[serde(default)]
        modes: Vec<usize>,
        sector: Parity,
    },
    BinaryFilter {
        target: Vec<usize>,
        /// Bits per mode; defaults to the bit length of each target.
        #[serde(default)]
        bits: Vec<usize>,
        #[serde(default)]
        phase_mode: PhaseMode,
    },
    /// Grid of prepared Fock states against measured targets on one mode.
    SingleShot {
        #[serde(default = "default_grid_n_max")]
        n_max: usize,
        #[serde(default)]
        mode: usize,
        #[serde(default)]
        phase_mode: PhaseMode,
        /// Restrict the grid to one prepared state.
        #[serde(default)]
        n_prepare: Option<usize>,
        /// Restrict the grid to one measured target.
        #[serde(default)]
        n_measure: Option<usize>,
    },
    CalibrateOffset {
        #[serde(default = "default_t_cal")]
        t_cal_s: f64,
        #[serde(default = "default_scan")]
        scan_hz: [f64; 2],
        #[serde(default = "default_offset_points")]
        points: usize,
    },
    CalibrateTpi {
        #[serde(default)]
        mode: usize,
        #[serde(default = "default_cal_points")]
        points: usize,
    },
    /// Single-Fock Ramsey fits over a ladder of occupations and the χ regression.
    Linearity {
        occupations: Vec<Vec<usize>>,
        #[serde(default = "default_linearity_points")]
        time_points: usize,
    },
}

fn default_points() -> usize {
    121
}
fn default_span() -> f64 {
    2.0
}
fn yes() -> bool {
    true
}
fn default_fit_n_max() -> usize {
    6
}
fn default_grid_n_max() -> usize {
    5
}
fn default_scan() -> [f64; 2] {
    [-100.0, 100.0]
}
fn default_t_cal() -> f64 {
    DEFAULT_T_CAL
}
fn default_offset_points() -> usize {
    DEFAULT_SCAN_POINTS
}
fn default_cal_points() -> usize {
    61
}
fn default_linearity_points() -> usize {
    60
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    /// Mean bright-state photon count; zero selects perfect detection.
    #[serde(default)]
    pub lambda_bright: f64,
    #[serde(default)]
    pub lambda_dark: f64,
    #[serde(default)]
    pub threshold_pass: u64,
    #[serde(default = "one_u64")]
    pub threshold_discriminate: u64,
}

fn one_u64() -> u64 {
    1
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            lambda_bright: 0.0,
            lambda_dark: 0.0,
            threshold_pass: 0,
            threshold_discriminate: 1,
        }
    }
}

impl DetectionConfig {
    pub fn model(&self) -> Result<DetectionModel, CliError> {
        if self.lambda_bright == 0.0 {
            return Ok(DetectionModel::perfect());
        }
        DetectionModel::new(self.lambda_bright, self.lambda_dark, self.threshold_pass, self.threshold_discriminate)
            .map_err(|e| CliError::Schema(format!("detection: {e}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Schema(e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Schema(format!("at `{path}`: {}", e.into_inner().message().trim()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                CliError::Schema(format!("unknown preset `{name}` (available: {})", names.join(", ")))
            })?;
        Self::from_toml(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn modes(&self) -> Result<Vec<ModeSpec>, CliError> {
        self.trap
            .modes
            .iter()
            .enumerate()
            .map(|(j, m)| {
                ModeSpec::new(hz(m.frequency_hz), m.eta).map_err(|e| CliError::Schema(format!("trap.modes[{j}]: {e}")))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, msg: String| Err(CliError::Schema(format!("at `{path}`: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            );
        }
        let m = self.trap.modes.len();
        if m == 0 {
            return bad("trap.modes", "at least one mode is required".into());
        }
        if self.trap.fock_dims.len() != m {
            return bad("trap.fock_dims", format!("{} entries for {m} mode(s)", self.trap.fock_dims.len()));
        }
        if self.trap.fock_dims.iter().any(|&d| d < 2) {
            return bad("trap.fock_dims", "every mode needs at least two levels".into());
        }
        if self.trap.spins == 0 {
            return bad("trap.spins", "at least one spin is required".into());
        }
        if !self.trap.gammas_per_s.is_empty() && self.trap.gammas_per_s.len() != m {
            return bad("trap.gammas_per_s", format!("{} entries for {m} mode(s)", self.trap.gammas_per_s.len()));
        }
        if self.trap.gammas_per_s.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return bad("trap.gammas_per_s", "rates must be finite and non-negative".into());
        }
        if !(self.drive.rabi_hz > 0.0 && self.drive.rabi_hz.is_finite()) {
            return bad("drive.rabi_hz", format!("must be positive, got {}", self.drive.rabi_hz));
        }
        self.modes()?;
        match &self.state {
            StateConfig::Fock { occupation } if occupation.len() != m => {
                return bad("state.occupation", format!("{} entries for {m} mode(s)", occupation.len()));
            }
            StateConfig::Coherent { alpha } if alpha.len() != m => {
                return bad("state.alpha", format!("{} entries for {m} mode(s)", alpha.len()));
            }
            StateConfig::Cat { mode, .. } | StateConfig::ParityMixture { mode, .. } if *mode >= m => {
                return bad("state.mode", format!("mode {mode} out of range"));
            }
            StateConfig::Ecs { .. } if m != 2 => return bad("state.kind", "ecs needs two modes".into()),
            StateConfig::ParityMixture { target_parity, .. } if !(-1.0..=1.0).contains(target_parity) => {
                return bad("state.target_parity", "must lie in [-1, 1]".into());
            }
            _ => {}
        }
        match &self.protocol {
            ProtocolConfig::Ramsey { ratios, time_points, span, parity_modes, .. } => {
                if *time_points < 2 {
                    return bad("protocol.time_points", "at least two points are required".into());
                }
                if !(*span > 0.0) {
                    return bad("protocol.span", "must be positive".into());
                }
                if !ratios.is_empty() && m != 2 {
                    return bad("protocol.ratios", "ratio traces need two modes".into());
                }
                if ratios.iter().any(|r| !(*r > 0.0)) {
                    return bad("protocol.ratios", "ratios must be positive".into());
                }
                if parity_modes.iter().any(|&j| j >= m) {
                    return bad("protocol.parity_modes", "mode out of range".into());
                }
            }
            ProtocolConfig::ParityFilter { modes, .. } if modes.iter().any(|&j| j >= m) => {
                return bad("protocol.modes", "mode out of range".into());
            }
            ProtocolConfig::BinaryFilter { target, bits, .. } => {
                if target.len() != m {
                    return bad("protocol.target", format!("{} entries for {m} mode(s)", target.len()));
                }
                if !bits.is_empty() && bits.len() != m {
                    return bad("protocol.bits", format!("{} entries for {m} mode(s)", bits.len()));
                }
            }
            ProtocolConfig::SingleShot { n_max, mode, n_prepare, n_measure, .. } => {
                if *mode >= m {
                    return bad("protocol.mode", format!("mode {mode} out of range"));
                }
                if *n_max >= self.trap.fock_dims[*mode] {
                    return bad("protocol.n_max", "exceeds the Fock truncation of the mode".into());
                }
                if n_prepare.is_some_and(|n| n > *n_max) || n_measure.is_some_and(|n| n > *n_max) {
                    return bad("protocol", "n_prepare and n_measure must not exceed n_max".into());
                }
            }
            ProtocolConfig::CalibrateOffset { t_cal_s, scan_hz, points } => {
                if !(*t_cal_s > 0.0) {
                    return bad("protocol.t_cal_s", "must be positive".into());
                }
                if !(scan_hz[1] > scan_hz[0]) {
                    return bad("protocol.scan_hz", "range must be increasing".into());
                }
                if *points < 3 {
                    return bad("protocol.points", "at least three points are required".into());
                }
            }
            ProtocolConfig::CalibrateTpi { mode, points } => {
                if *mode >= m {
                    return bad("protocol.mode", format!("mode {mode} out of range"));
                }
                if *points < 3 {
                    return bad("protocol.points", "at least three points are required".into());
                }
            }
            ProtocolConfig::Linearity { occupations, time_points } => {
                if occupations.is_empty() || occupations.iter().any(|n| n.len() != m) {
                    return bad("protocol.occupations", format!("need one {m}-entry occupation per row"));
                }
                if *time_points < 8 {
                    return bad("protocol.time_points", "at least eight points are required".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_round_trip() {
        for (name, _) in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(cfg, back, "{name}");
        }
    }

    #[test]
    fn schema_errors_carry_the_path() {
        let text = include_str!("../presets/filtered_even_cat.toml").replace("frequency_hz", "frequency");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("trap.modes"), "{err}");

        let text = include_str!("../presets/filtered_even_cat.toml").replace("schema_version = 1", "schema_version = 9");
        let err = ExperimentConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("schema_version"), "{err}");
    }
}
