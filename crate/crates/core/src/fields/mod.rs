//! Periodic spectral fields, differential operators, Leray projection,
//! heat semigroup, and point sampling.

pub mod fft;
pub mod field;
pub mod grid;
pub mod io;
pub mod ops;
pub mod sample;

pub use fft::Spectral3d;
pub use field::{engine_for, ScalarField, SparseMode, TensorField, VectorField};
pub use grid::{PeriodicGrid, TWO_PI};
pub use ops::{
    curl, deriv_n_magnitude, divergence, grad_tensor, gradient, heat_semigroup,
    heat_semigroup_scalar, leray_project, remove_mean,
};
pub use sample::{
    sample_scalar, sample_tensor, sample_vector, wrap, wrap_point, InterpMode, TrilinearStencil,
};
