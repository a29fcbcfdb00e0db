//! Determinant-form g-function engine and modulation solver for the
//! semiclassical focusing NLS.

pub mod config;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod geometry;
pub mod modulation;
pub mod par;
pub mod quadrature;
pub mod report;
pub mod rhp;
pub mod sample;
pub mod scattering;
pub mod verify;

/// Version tag carried by every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

pub use error::{Error, Result};
pub use num_complex::Complex64;
