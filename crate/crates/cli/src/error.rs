use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("scheduling error: {0}")]
    Scheduling(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 is reserved for usage errors reported by the argument parser.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Runtime(_) | CliError::Io(_) => 1,
            CliError::Schema(_) => 3,
            CliError::Scheduling(_) => 4,
            CliError::Fit(_) => 5,
            CliError::Calibration(_) => 6,
        })
    }
}

impl From<fockshift::Error> for CliError {
    fn from(e: fockshift::Error) -> Self {
        use fockshift::Error as E;
        let msg = e.to_string();
        match e {
            E::Scheduling { .. } | E::Resonance { .. } => CliError::Scheduling(msg),
            E::Fit { .. } | E::DegenerateFit(_) | E::Regression(_) => CliError::Fit(msg),
            E::Calibration(_) => CliError::Calibration(msg),
            E::InvalidInput(_) | E::Sizing { .. } | E::OutOfBounds { .. } | E::Bits { .. } => CliError::Schema(msg),
            E::Io(_) | E::Csv(_) => CliError::Io(msg),
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
