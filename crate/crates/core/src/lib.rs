//! Numerical toolkit for the one-dimensional cubic nonlinear Schrödinger
//! equation `i u_t + ½ u_xx = λ u|u|² + u F(|u|²)`: split-step integration,
//! wave-packet diagnostics, modified-scattering profiles, and solving from
//! infinity for a prescribed profile.

pub mod analysis;
pub mod commands;
pub mod completeness;
pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod profile;
pub mod rates;
pub mod solver;
pub mod spectrum;
pub mod wavepacket;

pub use error::{Error, Result};
pub use grid::{ComplexField, Grid, SpectralField};
