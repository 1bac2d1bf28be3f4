//! Direct data domain space-time adaptive processing via sparse
//! representation of the clutter spectrum.
//!
//! The crate synthesizes airborne radar space-time snapshots, estimates the
//! high-resolution angle-Doppler spectrum of a single test cell with adaptive
//! FOCUSS or L1 relaxation, turns the estimate into a clutter covariance and
//! adaptive filter, and benchmarks the result against the direct data domain
//! least squares (D3LS) and loaded sample matrix inversion (LSMI) baselines.
//!
//! Module map:
//!
//! * [`geometry`] - platform/array geometry and the clutter ridge
//! * [`scene`] - steering vectors and snapshot synthesis
//! * [`dictionary`] - overcomplete angle-Doppler basis and Fourier spectrum
//! * [`solvers`] - adaptive FOCUSS and the L1 solver
//! * [`stap`] - D3SR, D3LS and LSMI filters
//! * [`metrics`] - output SCR, range profiles, adapted spectra, MDV sweeps
//! * [`cli`] - experiment configuration and orchestration
//! * [`io`] - the structured text formats shared by all of the above
//!
//! Space-time vectors are laid out spatial-major: sample `(n, m)` (channel
//! `n`, pulse `m`) lives at index `n * M + m`.

pub mod cli;
pub mod dictionary;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod scene;
pub mod solvers;
pub mod stap;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
