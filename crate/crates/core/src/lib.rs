//! Multimode Fock-state measurement by spin-dependent dispersive phases.
//!
//! Units: angular frequencies in rad/s, times in s, ħ = 1.

pub mod analysis;
pub mod error;
pub mod dynamics;
pub mod fock;
pub mod measurement;
pub mod protocol;
pub mod special;

pub use error::{Error, Result};
