//! Numerical toolkit for ε-scaled Schrödinger dynamics and the phase-space
//! measures built from it.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] periodic grids, unitary DFTs, spectral derivatives, interpolation
//! * [`potentials`] smooth nonnegative external potentials
//! * [`schrodinger`] Strang-split spectral propagation with conservation diagnostics
//! * [`hydrodynamics`] position density, current, velocity field, Bohm potential
//! * [`bohmian`] trajectory ensembles and equivariance checks
//! * [`phasespace`] Bohmian measures, Wigner and Husimi transforms, sliced-W₁ distance
//! * [`semiclassics`] case-study families, closed-form limits, WKB characteristics, ε-sweeps
//! * [`io`] on-disk formats shared with the command-line tool
//!
//! Only one spatial dimension is supported.

pub mod bohmian;
pub mod error;
pub mod grid;
pub mod hydrodynamics;
pub mod io;
pub mod phasespace;
pub mod potentials;
pub mod schrodinger;
pub mod semiclassics;

pub use error::{Error, Result};
pub use grid::{ComplexField, UniformGrid};
pub use potentials::Potential;
pub use schrodinger::WaveFunction;

pub use num_complex::Complex64;
