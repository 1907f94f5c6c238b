//! Effective-potential solver for periodically perturbed one-dimensional
//! Hamiltonians.
//!
//! A periodic perturbation (spatial with period `d_p`, or temporal with
//! angular frequency `ω_p`) couples a base state to a ladder of harmonic
//! channels. Eliminating those channels leaves a modified Schrödinger
//! equation with an energy-dependent, nonlocal effective potential whose
//! diagonal projection is a sum of simple poles. Every intersection of that
//! rational function with the line `ε - ε0` is an eigenvalue, so the solver
//! returns `N_p·N_p' + 1` roots per base state instead of one.
//!
//! Module map:
//!
//! * [`model`]: configuration document, validated [`model::SystemSpec`] and
//!   channel energies.
//! * [`eigenbasis`]: finite-difference eigenbases, matrix elements, Green
//!   function.
//! * [`effpot`]: pole/weight tables, effective-potential kernel and its
//!   action.
//! * [`spectra`]: bracketed root finding, solution counting, realisation
//!   grouping.
//! * [`reconstruct`]: component functions, total wavefunction and density.
//! * [`oracle`]: independent verifiers (polynomial roots, coupled-channel
//!   matrix, refined grid).
//!
//! Units are dimensionless with `ħ = m = 1` throughout.

pub mod effpot;
pub mod eigenbasis;
pub mod error;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod reconstruct;
pub mod spectra;
mod tridiag;

pub use error::{Error, Result};
pub use num_complex::Complex64;
