//! Joint angle and delay estimation (JADE) for wideband millimeter-wave
//! uniform cylindrical arrays with hybrid front-ends.
//!
//! The crate implements the full receive pipeline of a hybrid UCyA base
//! station estimating per-path channel parameters from OFDM pilots:
//!
//! 1. [`channel_sim`] — synthetic wideband multipath channels and noisy
//!    baseband snapshots,
//! 2. [`beamformer`] — two-stage hybrid combining: vertical DFT beamspace
//!    with greedy beam selection, then a Q-DFT phase-mode reduction of each
//!    ring exploiting the convergence of Bessel functions,
//! 3. [`mdsi`] — multidimensional spatial interpolation that counteracts
//!    beam squint across the band,
//! 4. [`jade`] — subspace estimation of delays (ESPRIT over subcarriers),
//!    elevations (ESPRIT over selected beams), azimuths (MUSIC over phase
//!    modes), and eigenvalue pair matching via a minimum-norm perturbation,
//! 5. [`localization`] — 3D positioning from matched path estimates with
//!    known or unknown clock offset,
//! 6. [`crlb`] — numerical Cramér-Rao bounds from finite-difference Fisher
//!    information,
//! 7. [`harness`] — reproducible seeded Monte-Carlo experiments with CSV
//!    output.
//!
//! Trials are embarrassingly parallel; with the default `parallel` feature
//! they run on a rayon pool, and seeding is counter-based so results do not
//! depend on thread count.

pub mod array_model;
pub mod beamformer;
pub mod bessel;
pub mod channel_sim;
pub mod crlb;
mod error;
pub mod exec;
pub mod harness;
pub mod jade;
pub mod linalg;
pub mod localization;
pub mod mdsi;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
