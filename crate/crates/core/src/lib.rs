//! Identification of linear time-varying operators whose spreading function
//! is supported on an unknown set of delay-Doppler cells.
//!
//! The operator is probed with an `L`-periodic train of weighted Dirac
//! impulses spaced `T` apart. In the Zak domain the response reduces, at every
//! point of the fundamental cell, to the underdetermined linear system
//! `z(t,f) = A_c s(t,f)` with an `L x L^2` matrix `A_c`. This crate builds that
//! system ([`gabor`]), simulates it ([`simulate`]), recovers the active cells
//! and the spreading function from the measurement ([`recover`]) and
//! certifies identifiability at desk scale ([`certify`]).

pub mod certify;
pub mod error;
pub mod gabor;
pub mod io;
pub mod linalg;
pub mod model;
pub mod recover;
pub mod rng;
pub mod simulate;
pub mod subsets;

pub use error::{IdentError, Result};
pub use num_complex::Complex64;

/// Relative singular-value threshold for rank decisions on `A_c` submatrices.
pub const EPS_SPARK: f64 = 1e-10;
/// Relative eigenvalue threshold separating signal and noise subspaces (noiseless mode).
pub const EPS_RANK: f64 = 1e-10;
/// Normalized noise-subspace score below which a column counts as in-support.
pub const EPS_MUSIC: f64 = 1e-8;
/// Relative projection residual below which a candidate support explains the data.
pub const EPS_FIT: f64 = 1e-9;
/// Largest number of subsets any exhaustive enumeration may visit.
pub const SUBSET_BUDGET: u128 = 10_000_000;
