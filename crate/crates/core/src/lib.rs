//! Petermann factors, phase rigidities and spectral response strength of
//! non-Hermitian matrices near exceptional points (EPs).
//!
//! - [`linalg`]: complex dense linear algebra (spectral norm, biorthogonal
//!   eigensystems, least-norm solves, QR).
//! - [`jordan`]: Jordan chains of an EP and ξ from the last Jordan vector.
//! - [`response`]: ξ = ‖N^{n−1}‖, leading-order rigidity and Petermann
//!   predictions, and bounds.
//! - [`modes`]: per-eigenstate overlaps, rigidities and Petermann factors.
//! - [`hatano`]: the solvable asymmetric hopping chain.
//! - [`estimator`]: ξ of an EP embedded in a larger matrix.
//! - [`ensemble`]: random embedded-EP Hamiltonians and the Monte Carlo harness.
//! - [`cli`]: the `epxi` command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod estimator;
pub mod hatano;
pub mod jordan;
pub mod linalg;
pub mod modes;
pub mod response;
pub mod serde_complex;
pub mod svg;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};
pub use num_complex::Complex64;
