//! Truncated-Wigner simulator and Bogoliubov scattering toolkit for a
//! quasi-1-D condensate with localized atom loss.

pub mod analytics;
pub mod config;
pub mod engine;
pub mod error;
pub mod lattice;
pub mod observables;
pub mod persist;
pub mod runner;
pub mod scattering;
pub mod vacuum;

pub use error::{Error, Result};
