//! Finite-difference solver for the free-boundary problem of an incompressible,
//! rotational jet issuing from a two-dimensional nozzle.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`profiles`]: upstream shear profile, streamline change of variables,
//!    vorticity strength and its smooth extension, downstream conjugate state.
//! 2. [`domain`]: nozzle geometry, truncated computational box, grid
//!    rasterization and Dirichlet data assembly.
//! 3. [`solver`]: nodewise coordinate-descent minimization of the jet energy
//!    functional with an exact treatment of the gradient jump term.
//! 4. [`freeboundary`]: interface extraction and the regularity diagnostics
//!    (flatness, nondegeneracy, density, perimeter-type measure, blow-up).
//! 5. [`jetfit`]: outer bisection on the jet strength so the interface
//!    detaches at the nozzle lip, plus physical fields and global checks.
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the default `std`
//! feature for `std::error::Error` impls. All routines are deterministic:
//! identical inputs produce bit-identical outputs.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

mod fmath;
mod interp;
mod quad;
mod root;

pub mod domain;
pub mod error;
pub mod freeboundary;
pub mod jetfit;
pub mod profiles;
pub mod solver;

pub use error::Error;
