//! Simulation and tomographic analysis of polarization-entangled photon
//! pairs emitted by the biexciton-exciton radiative cascade of a quantum dot.
//!
//! The crate is organized along the data flow:
//!
//! * [`polarization`] - Poincaré-sphere states and two-photon projectors.
//! * [`cascade`] - the closed-form cascade model (state, rates, windowed
//!   negativity).
//! * [`simulator`] - Monte Carlo coincidence events and histograms.
//! * [`tomography`] - linear and maximum-likelihood density matrix
//!   reconstruction from the 16 projection histograms.
//! * [`metrics`] - negativity, Bell fidelity.
//! * [`analysis`] - IRF convolution, lifetime fit, negativity vs window.
//! * [`io`] and [`cli`] - configuration, file formats and the command line.

pub mod analysis;
pub mod cascade;
pub mod cli;
pub mod density;
pub mod error;
pub mod io;
pub mod metrics;
pub mod polarization;
pub mod simulator;
pub mod tomography;

pub use cascade::CascadeParams;
pub use density::{DensityMatrix, C64};
pub use error::{Error, Result};
pub use polarization::{NamedState, PolarizationState};

/// Tool version written into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
