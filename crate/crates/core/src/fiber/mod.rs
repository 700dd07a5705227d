//! Spectral tensor calculus on a single torus fiber.
//!
//! Fields are sampled on a uniform grid in lattice coordinates `z = x + Omega y` and
//! differentiated through the discrete Fourier transform. The Laplacian uses the sign
//! `□ = -g^{bbar a} d_a d_bbar`, so its spectrum is nonnegative.

mod field;
mod grid;
mod ops;

pub use field::{Index, MetricField, TensorField};
pub use grid::FiberGrid;
pub use ops::{
    check_spectral_tail, christoffel, contract, covariant_derivative, harmonic_projection, integrate,
    laplacian, poisson_solve, spectral_derivative, tensor_product, trace, volume, write_csv, Direction,
    Pairing,
};
