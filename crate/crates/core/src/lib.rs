//! Minimal solutions of BSDEs with singular terminal data on the exit time of
//! a diffusion, and the matching boundary blow-up problem
//! `-L u + u |u|^q = 0`, computed both by Monte Carlo and by finite
//! differences so the two can be checked against each other.

pub mod bsde;
pub mod checks;
pub mod closedform;
pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod pde;
mod quadrature;

pub use error::{Error, Result};
