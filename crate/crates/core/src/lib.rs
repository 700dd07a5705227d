//! Numerical construction and verification of Kähler forms on families of
//! principally polarized complex tori: flat Ricci-flat fiber metrics, a spectral
//! complex Monge-Ampère solver, Kodaira-Spencer tensors, the Weil-Petersson metric,
//! the curvature of the relative canonical bundle, fiberwise Green kernels, and the
//! positivity of `omega_X + (c+1) f^* omega_WP`.

pub mod assembler;
pub mod cli;
pub mod curvature;
pub mod error;
pub mod family;
pub mod fiber;
pub mod green;
pub mod linalg;
pub mod ma;
pub mod quad;
pub mod torus;

pub use error::{Error, Result};
pub use num_complex::Complex64;
