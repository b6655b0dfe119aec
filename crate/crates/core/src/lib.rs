//! Statevector simulation and measurement-cost analysis for metric-aware
//! (natural-gradient) variational optimization.
//!
//! The crate is organized bottom-up: Pauli-string algebra and dense
//! statevectors, hardware-efficient ansatz circuits, exact estimators for the
//! energy gradient and the metric tensor, shot-noise models for those
//! estimators, first-order error propagation through the regularized metric
//! inverse, measurement budgets (uniform and optimal), and finally the
//! imaginary-time-style evolution loop with per-iteration cost diagnostics.

pub mod allocation;
pub mod ansatz;
mod error;
pub mod estimator;
pub mod evolution;
pub mod oracle;
pub mod pauli;
pub mod propagation;
pub mod rng;
pub mod shots;
pub mod state;

pub use error::{Error, Result};
