//! Simulation and verification of sliding-mode feedback control for
//! Caginalp-type phase-field systems on boxes with Neumann boundaries.
//!
//! - [`operators`]: potentials, resolvents, Yosida approximations, prox maps.
//! - [`grid`]: node-centred meshes, fields, the Neumann Laplacian and solves.
//! - [`dynamics`]: time stepping of the three controlled systems.
//! - [`bounds`]: gain thresholds and predicted extinction times.
//! - [`extinction`]: extinction detection and sliding verdicts.

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod extinction;
pub mod grid;
pub mod operators;

pub use error::{Error, Result};
