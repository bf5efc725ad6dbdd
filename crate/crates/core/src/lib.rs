//! Population dynamics and microwave response of the Ohmic spin-boson model
//! in the noninteracting-blip approximation (NIBA).
//!
//! The crate is organized as a set of strategy registries: bath correlation
//! forms ([`bath`]), kernel evaluations ([`kernels`]), susceptibility paths
//! ([`response`]), generalized-master-equation kernel preparations
//! ([`dynamics`]), and coherence criteria ([`phase`]) are each a family of
//! interchangeable algorithms behind a common trait, selected by name at
//! runtime.
//!
//! Internal units: `hbar = k_B = 1`, energies are angular frequencies in a
//! caller-chosen reference scale (conventionally the tunneling amplitude).

pub mod bath;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod kernels;
pub mod params;
pub mod phase;
pub mod response;
pub mod specfun;

pub use error::{Error, Result};
pub use params::{BathParams, DriveParams, ModelParams, QubitParams};
