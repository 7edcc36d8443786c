//! Fit models for Ramsey traces, population fitting, parity and linearity
//! estimates, and multi-ion spin-string probabilities.

mod dataset;
mod fit;
mod lsq;
mod model;
mod stats;

pub use dataset::{read_datasets_csv, read_datasets_csv_file, write_datasets_csv, RamseyDataset};
pub use fit::{
    fit_populations, fit_single_fock, DatasetFit, FitOptions, FitResult, SingleFockFit, DEFAULT_STARTS,
    DEGENERACY_THRESHOLD,
};
pub use model::{pup_model_full, pup_model_linear, single_fock_model, FitModelParams, FitSetting};
pub use stats::{
    linearity_regression, parity_from_populations, spin_string_probabilities, FockShift, LinearityFit, ParityEstimate,
};
