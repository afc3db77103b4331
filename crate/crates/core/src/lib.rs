//! Stochastic-approximation variational quantum imaginary-time evolution.
//!
//! The crate is organised bottom-up:
//!
//! - [`pauli`]: Pauli strings, weighted sums and the model Hamiltonians.
//! - [`circuit`]: parametric circuits, ansatz builders and circuit transforms.
//! - [`backend`]: statevector simulation, sampled estimators and synthetic noise.
//! - [`gradients`]: exact and sampled quantum geometric tensors and evolution gradients.
//! - [`linsolve`]: regularized solves of the noisy McLachlan system.
//! - [`evolve`]: VarQITE / SA-QITE time-evolution drivers and the Taylor reference.
//! - [`optimize`]: SPSA, QN-SPSA and SA-QITE used as a ground-state optimizer.
//! - [`mitigate`]: readout mitigation, zero-noise extrapolation and twirled energies.

// `!(x > 0.0)` checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod circuit;
pub mod error;
pub mod evolve;
pub mod gradients;
pub mod linsolve;
pub mod mitigate;
pub mod optimize;
pub mod pauli;
pub mod rng;

pub use error::{Error, Result};
pub use rng::SimRng;
