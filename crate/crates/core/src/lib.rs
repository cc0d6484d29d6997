//! Random dynamical decoupling of finite-dimensional open quantum systems.
//!
//! The crate simulates randomized pulse walks, evaluates continuum-limit
//! expectations and variances of the evolution and of the gate fidelity,
//! and classifies observed decoherence as intrinsic or extrinsic.

pub mod decoupling;
pub mod diagnose;
pub mod dilation;
pub mod error;
pub mod fidelity;
pub mod limit;
pub mod lindblad;
pub mod operator_space;
pub mod parallel;
pub mod random;
pub mod serde_matrix;
pub mod walk;

pub use error::{DecoqError, Result};
