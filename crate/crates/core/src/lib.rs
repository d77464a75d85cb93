//! Charge-transfer counting statistics in the resonant-level model.
//!
//! A single fermionic level (the dot) is hybridized with two chiral
//! free-fermion reservoirs held at different temperatures and potentials.
//! This crate computes the statistics of the charge transferred through the
//! dot along two independent routes:
//!
//! * [`fcs`] — the analytic large-time route: a momentum integral over a
//!   2x2 block determinant, the equivalent closed form in terms of the
//!   transmission probability, current cumulants and the fluctuation
//!   relation;
//! * [`engine`] — the exact finite-size, finite-time route: one-particle
//!   charge projectors, counting-field exponentials and dense determinants
//!   over a truncated eigenbasis, with steady-state relaxation checks.
//!
//! Supporting modules hold the closed-form scattering data of the impurity
//! ([`scattering`]), the reservoir description ([`baths`]), the finite-size
//! eigenbases ([`basis`]), adaptive quadrature ([`quad`]) and the
//! cutoff-regularized current-fluctuation amplitudes ([`current_fluct`]).

pub mod basis;
pub mod baths;
pub mod current_fluct;
pub mod engine;
pub mod error;
pub mod fcs;
pub mod params;
pub mod quad;
pub mod scattering;

pub use basis::{build_basis, BasisKind, BasisState, FiniteLBasis, SectorTag};
pub use baths::{BathConfig, Lead, SpectralBlock2};
pub use error::{Error, Result};
pub use fcs::{CountingFields, Direction};
pub use params::ModelParams;
pub use quad::QuadratureSpec;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = ndarray::Array2<num_complex::Complex64>;
/// Dense complex vector.
pub type CVector = ndarray::Array1<num_complex::Complex64>;
