//! `fockshift`: batch runner for dispersive Fock-state measurement experiments.

mod config;
mod error;
mod experiment;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fockshift::analysis::read_datasets_csv;
use fockshift::fock::Parity;
use fockshift::protocol::PhaseMode;

use crate::config::{ExperimentConfig, ProtocolConfig, PRESETS};
use crate::error::CliError;
use crate::output::{Bundle, Format};

/// Traces simulated from the `ecs` preset, used when `fit` gets no input.
const BUNDLED_ECS_DATA: &str = include_str!("../data/ecs_datasets.csv");

#[derive(Parser)]
#[command(name = "fockshift", version, about = "Simulate and analyse dispersive Fock-state measurements")]
struct Cli {
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "fockshift-out")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Source {
    /// Experiment configuration file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name (see `fockshift presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the configured shots per point.
    #[arg(long)]
    shots: Option<u64>,
}

impl Source {
    fn load(&self, default_preset: Option<&str>) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match (&self.config, &self.preset, default_preset) {
            (Some(path), _, _) => ExperimentConfig::from_file(path)?,
            (None, Some(name), _) => ExperimentConfig::preset(name)?,
            (None, None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None, None) => return Err(CliError::Schema("one of --config or --preset is required".into())),
        };
        if let Some(s) = self.shots {
            cfg.shots = s;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SectorArg {
    Even,
    Odd,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Exact,
    BitValue,
}

impl From<PhaseArg> for PhaseMode {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Exact => PhaseMode::Exact,
            PhaseArg::BitValue => PhaseMode::BitValue,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Runs the protocol described by a configuration file or preset.
    Run {
        #[command(flatten)]
        source: Source,
    },
    /// Simulates Ramsey traces without fitting.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Ratio labels `χ_eff,1/χ_eff,2`, one trace each.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Fits populations to Ramsey datasets (bundled ECS traces by default).
    Fit {
        #[command(flatten)]
        source: Source,
        /// Dataset CSV with columns time_s, p_up, shots, ratio_label.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Restricts the fit to traces with these ratio labels.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long)]
        n_max: Option<usize>,
        /// Compares against the configured state even for external input.
        #[arg(long)]
        truth: bool,
    },
    /// Applies a parity or binary-decomposition filter.
    Filter {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, conflicts_with = "target")]
        sector: Option<SectorArg>,
        /// Modes entering the parity (default: all).
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<usize>>,
        /// Target occupation for a binary filter, one entry per mode.
        #[arg(long, value_delimiter = ',')]
        target: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        bits: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value_t = PhaseArg::Exact)]
        phase_mode: PhaseArg,
    },
    /// Single-shot readout grid over prepared and measured Fock states.
    SingleShot {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        n_prepare: Option<usize>,
        #[arg(long)]
        n_measure: Option<usize>,
        #[arg(long)]
        lambda_bright: Option<f64>,
        #[arg(long)]
        lambda_dark: Option<f64>,
        #[arg(long)]
        perfect_detection: bool,
        #[arg(long, value_enum)]
        phase_mode: Option<PhaseArg>,
    },
    /// Calibration scans.
    Calibrate {
        #[command(subcommand)]
        which: Calibration,
    },
    /// Dispersive shift against phonon number over a Fock ladder.
    Linearity {
        #[command(flatten)]
        source: Source,
    },
    /// Lists presets, or prints one.
    Presets { name: Option<String> },
}

#[derive(Subcommand)]
enum Calibration {
    /// Vacuum phase-offset scan.
    Offset {
        #[command(flatten)]
        source: Source,
        /// Injected residual frequency shift (Hz).
        #[arg(long)]
        residual_hz: Option<f64>,
        #[arg(long)]
        t_cal: Option<f64>,
    },
    /// `t_π` scan on `|2⟩`.
    Tpi {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        mode: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fockshift: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let (mut cfg, fit_input) = match cli.command {
        Command::Presets { name } => return presets(name.as_deref()),
        Command::Run { source } => (source.load(None)?, None),
        Command::Simulate { source, ratios, points } => {
            let mut cfg = source.load(None)?;
            let (mut r, mut p, f, n, m) = match cfg.protocol {
                ProtocolConfig::Ramsey { ratios, time_points, span, fit_n_max, parity_modes, .. } => {
                    (ratios, time_points, span, fit_n_max, parity_modes)
                }
                _ => (Vec::new(), 121, 2.0, 6, Vec::new()),
            };
            if let Some(x) = ratios {
                r = x;
            }
            if let Some(x) = points {
                p = x;
            }
            cfg.protocol = ProtocolConfig::Ramsey { ratios: r, time_points: p, span: f, fit: false, fit_n_max: n, parity_modes: m };
            (cfg, None)
        }
        Command::Fit { source, input, ratios, n_max, truth } => {
            let cfg = source.load(Some("ecs"))?;
            (cfg, Some((input, ratios, n_max, truth)))
        }
        Command::Filter { source, sector, modes, target, bits, phase_mode } => {
            let mut cfg = source.load(None)?;
            if let Some(target) = target {
                cfg.protocol =
                    ProtocolConfig::BinaryFilter { target, bits: bits.unwrap_or_default(), phase_mode: phase_mode.into() };
            } else if let Some(s) = sector {
                let sector = match s {
                    SectorArg::Even => Parity::Even,
                    SectorArg::Odd => Parity::Odd,
                };
                cfg.protocol = ProtocolConfig::ParityFilter { modes: modes.unwrap_or_default(), sector };
            } else if !matches!(cfg.protocol, ProtocolConfig::ParityFilter { .. } | ProtocolConfig::BinaryFilter { .. }) {
                return Err(CliError::Schema("filter needs --sector or --target".into()));
            }
            (cfg, None)
        }
        Command::SingleShot { source, n_max, n_prepare, n_measure, lambda_bright, lambda_dark, perfect_detection, phase_mode } => {
            let mut cfg = source.load(Some("single_shot"))?;
            let (n, mode, pm, np, nm) = match cfg.protocol {
                ProtocolConfig::SingleShot { n_max, mode, phase_mode, n_prepare, n_measure } => {
                    (n_max, mode, phase_mode, n_prepare, n_measure)
                }
                _ => (5, 0, PhaseMode::Exact, None, None),
            };
            cfg.protocol = ProtocolConfig::SingleShot {
                n_max: n_max.unwrap_or(n),
                mode,
                phase_mode: phase_mode.map(Into::into).unwrap_or(pm),
                n_prepare: n_prepare.or(np),
                n_measure: n_measure.or(nm),
            };
            if let Some(l) = lambda_bright {
                cfg.detection.lambda_bright = l;
            }
            if let Some(l) = lambda_dark {
                cfg.detection.lambda_dark = l;
            }
            if perfect_detection {
                cfg.detection.lambda_bright = 0.0;
                cfg.detection.lambda_dark = 0.0;
            }
            (cfg, None)
        }
        Command::Calibrate { which: Calibration::Offset { source, residual_hz, t_cal } } => {
            let mut cfg = source.load(Some("single_mode"))?;
            let (mut t, scan, points) = match cfg.protocol {
                ProtocolConfig::CalibrateOffset { t_cal_s, scan_hz, points } => (t_cal_s, scan_hz, points),
                _ => (fockshift::protocol::DEFAULT_T_CAL, [-100.0, 100.0], fockshift::protocol::DEFAULT_SCAN_POINTS),
            };
            if let Some(x) = t_cal {
                t = x;
            }
            if let Some(r) = residual_hz {
                cfg.trap.residual_shift_hz = r;
            }
            cfg.protocol = ProtocolConfig::CalibrateOffset { t_cal_s: t, scan_hz: scan, points };
            (cfg, None)
        }
        Command::Calibrate { which: Calibration::Tpi { source, mode } } => {
            let mut cfg = source.load(Some("single_mode"))?;
            let (m, points) = match cfg.protocol {
                ProtocolConfig::CalibrateTpi { mode, points } => (mode, points),
                _ => (0, 61),
            };
            cfg.protocol = ProtocolConfig::CalibrateTpi { mode: mode.unwrap_or(m), points };
            (cfg, None)
        }
        Command::Linearity { source } => {
            let cfg = source.load(Some("single_mode"))?;
            if !matches!(cfg.protocol, ProtocolConfig::Linearity { .. }) {
                return Err(CliError::Schema("protocol.kind must be `linearity` for this command".into()));
            }
            (cfg, None)
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    let mut bundle = Bundle::create(&cli.out_dir, cli.format)?;
    let summary = match fit_input {
        None => experiment::run_experiment(&cfg, &mut bundle)?,
        Some((input, ratios, n_max, truth)) => fit_command(&cfg, input, ratios, n_max, truth, &mut bundle)?,
    };
    for line in &summary {
        println!("{line}");
    }
    let files = bundle.finish()?;
    println!("wrote {} file(s) to {}", files.len(), cli.out_dir.display());
    Ok(())
}

fn fit_command(
    cfg: &ExperimentConfig,
    input: Option<PathBuf>,
    ratios: Option<Vec<f64>>,
    n_max: Option<usize>,
    truth: bool,
    bundle: &mut Bundle,
) -> Result<Vec<String>, CliError> {
    let bundled = input.is_none();
    let mut datasets = match &input {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            read_datasets_csv(file)?
        }
        None => read_datasets_csv(BUNDLED_ECS_DATA.as_bytes())?,
    };
    bundle.log(match &input {
        Some(p) => format!("fitting {} trace(s) from {}", datasets.len(), p.display()),
        None => format!("fitting {} bundled trace(s)", datasets.len()),
    });
    if let Some(keep) = &ratios {
        datasets.retain(|d| d.ratio_label.is_some_and(|r| keep.iter().any(|k| (k - r).abs() < 1e-9)));
        if datasets.is_empty() {
            return Err(CliError::Schema("no traces carry the requested ratio labels".into()));
        }
    }
    let datasets = datasets
        .into_iter()
        .map(|d| {
            let spec = experiment::design_spec(cfg, d.ratio_label)?;
            Ok(d.with_spec(spec))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let (default_n, parity_modes) = match &cfg.protocol {
        ProtocolConfig::Ramsey { fit_n_max, parity_modes, .. } => (*fit_n_max, parity_modes.clone()),
        _ => (4, Vec::new()),
    };
    let truth = if bundled || truth { Some(experiment::cfg_truth(cfg)?) } else { None };
    let (report, summary) =
        experiment::fit_and_report(cfg, datasets, n_max.unwrap_or(default_n), &parity_modes, truth, bundle)?;
    bundle.results(&report)?;
    Ok(summary)
}

fn presets(name: Option<&str>) -> Result<(), CliError> {
    match name {
        None => PRESETS.iter().for_each(|(n, _)| println!("{n}")),
        Some(n) => {
            let text = PRESETS
                .iter()
                .find(|(p, _)| *p == n)
                .map(|(_, t)| *t)
                .ok_or_else(|| CliError::Schema(format!("unknown preset `{n}`")))?;
            print!("{text}");
        }
    }
    Ok(())
}
