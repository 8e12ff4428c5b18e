//! Electrostatics of a three-terminal p-i-n micropillar and the response of a
//! quantum-dot exciton embedded in it.
//!
//! * [`device`] — footprint geometry, materials and meshing
//! * [`solver`] — stationary potential, fields and terminal currents
//! * [`exciton`] — field → fine-structure splitting and mean energy
//! * [`spectro`] — polarization-resolved scans and sinusoidal fitting
//! * [`tuner`] — bias sweeps, zero-FSS search and iso-FSS selection

pub mod config;
pub mod device;
pub mod error;
pub mod exciton;
pub mod output;
pub mod solver;
pub mod sparse;
pub mod spectro;
pub mod tuner;

pub use error::{Error, Result};
