//! Passivation of delay-afflicted controllers through an invertible 2×2
//! input-output transformation, with online parameter tuning by
//! perturbation-based extremum seeking.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: sampled traces, energy integrals and supply-rate checks.
//! - [`lti`]: frequency-domain analysis of SISO rational systems with dead time.
//! - [`passivation`]: the transformation matrix, its sufficient conditions and
//!   the causal runtime wiring around a stepped system.
//! - [`extremum_seeking`]: dither/demodulation gradient estimation for up to
//!   four parameters.
//! - [`plant`]: the adaptive cruise control testbed.
//! - [`cosim`]: scenario files, the experiment loop, run records and exports.

pub mod cosim;
pub mod error;
pub mod extremum_seeking;
pub mod lti;
pub mod passivation;
pub mod plant;
pub mod signal;

pub use error::{Error, Result};
