//! Mixed interior-penalty discontinuous Galerkin solver for the
//! Cahn-Hilliard equation on `[-1, 1]^2`.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: uniform square-split triangulations and quadrature rules;
//! * [`dg`]: broken polynomial spaces, SIPG/mass/nonlinear assembly;
//! * [`operators`]: inverse discrete Laplacian, the `-1,h` inner product,
//!   elliptic and initial projections, node-averaged reconstruction;
//! * [`time_stepper`]: the backward-Euler mixed scheme with convex-splitting
//!   or fully implicit nonlinearity, energies and the discrete energy law;
//! * [`interface`]: initial data for the three benchmark tests and
//!   zero-level-set extraction;
//! * [`diagnostics`]: convergence studies, the linearized spectrum
//!   estimate and the nonlinear discrete Gronwall bound;
//! * [`cli`]: configuration handling and the `chdg` command line.

pub mod error;
pub mod linalg;
pub mod mesh;
pub mod dg;
pub mod operators;
pub mod time_stepper;
pub mod interface;
pub mod diagnostics;
pub mod cli;

pub use error::{Error, Result};
