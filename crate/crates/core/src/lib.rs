//! Adaptive informationally complete POVM estimation of observables on
//! simulated quantum states.
//!
//! The crate samples outcome strings from product POVMs on a dense
//! statevector, turns them into unbiased Monte Carlo estimates of a Pauli
//! observable, estimates the gradient of the estimator's second moment with
//! respect to the POVM parameters from the same samples, and mixes the
//! per-iteration estimates by inverse variance. Pauli and grouped-Pauli
//! estimators serve as baselines, and the stored outcomes can be reused for
//! reduced-state tomography.

pub mod adaptive;
pub mod baselines;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod observables;
pub mod parallel;
pub mod povm;
pub mod sampling;
pub mod simulator;
pub mod tomography;

pub use error::{Error, Result};
