//! Simulation and analysis of optical homodyne tomography with optical
//! loss and detector electronic noise.
//!
//! The modules follow the measurement chain: [`states`] describes Gaussian
//! states and their Wigner functions, [`channels`] the loss and noise
//! channels together with vacuum calibration, [`detector`] a Monte Carlo
//! homodyne detector, [`tomography`] the link between marginals and Wigner
//! functions, and [`analysis`] the squeezing-based efficiency inference.

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channels;
pub mod detector;
pub mod error;
pub mod grid;
pub mod rng;
mod special;
pub mod states;
pub mod tomography;

pub use analysis::{EfficiencyReport, SweepConfig, SweepPoint};
pub use channels::{Calibration, DetectorModel};
pub use error::{Error, Result};
pub use grid::{GridMoments, GridSpec, WignerGrid};
pub use states::{GaussianState, MarginalDensity};
pub use tomography::{GaussianFit, MarginalHistogram, PhaseMoments};
