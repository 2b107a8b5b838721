//! Simulator for a chiral waveguide-QED interconnect between two
//! superconducting modules.
//!
//! Units: angular frequencies in rad/ns, times in ns.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod lindblad;
pub mod network;
pub mod protocol;
pub mod pulses;
pub mod qops;
pub mod rloptim;
pub mod scattering;
pub mod slh;

pub use error::{Error, Result};
pub use num_complex::Complex64;
