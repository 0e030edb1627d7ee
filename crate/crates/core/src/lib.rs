//! Driven two-level atom in a lossy cavity.
//!
//! Coherent destruction of tunneling in the isolated driven atom, Floquet
//! quasienergies from the one-period propagator, the Lorentzian cavity bath
//! and its correlation kernel, and the time-dependent Bloch-Redfield
//! equations for the atom coupled to that bath.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bath;
pub mod closed;
pub mod error;
pub mod floquet;
pub mod model;
pub mod ode;
pub mod quad;
pub mod redfield;
pub mod scenario;

pub use error::{Error, Result};
pub use model::{validate, BlochState, SystemConfig, Trajectory, Validated, Warning};
