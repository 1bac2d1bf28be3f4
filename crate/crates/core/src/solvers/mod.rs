//! Sparse recovery of the test-cell angle-Doppler spectrum.

pub mod focuss;
pub mod l1;

pub use focuss::{focuss_solve, FocussOptions, FocussState};
pub use l1::{l1_solve, L1Options};
