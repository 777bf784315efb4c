//! Numerical toolkit for the 3-d incompressible Navier-Stokes equation on
//! the periodic box [0, 2π)³: a pseudo-spectral solver, norm and
//! regularity-criterion diagnostics, and stochastic Feynman-Kac
//! verification of the transported vorticity/magnetization variables.

pub mod error;
pub mod fields;
pub mod norms;
pub mod scenarios;
pub mod solver;
pub mod stochastic;

pub mod testutil;

pub use error::{CoreError, Result};
