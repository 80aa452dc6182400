//! Construction and pointwise numerical verification of static plasma
//! equilibria: isotropic force balance, the anisotropic (CGL) system, exact
//! vortex solutions, flux-function equations with an SOR solver, symmetry
//! transforms between the two systems, and conservation-law checks.

pub mod bobnev;
pub mod claws;
pub mod error;
pub mod export;
pub mod field;
pub mod frame;
pub mod gs;
pub mod sample;
pub mod transforms;

pub use error::{Error, Result};
