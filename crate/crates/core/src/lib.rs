//! Non-unitary boson sampling on a one-dimensional PT-symmetric quantum walk.
//!
//! Single-photon operators and propagators live in [`walk`], band structure in
//! [`spectral`], permanents in [`permanent`], multi-photon distributions in
//! [`fock`], and the dynamical diagnostics and bounds in [`analytics`].

pub mod analytics;
pub mod combinatorics;
pub mod error;
pub mod fock;
pub mod permanent;
pub mod scaled;
pub mod spectral;
pub mod walk;

pub use error::{Error, Result};
pub use walk::C64;
