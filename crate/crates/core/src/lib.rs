//! Core of the sensor-cloning pipeline: a small deterministic neural-network
//! engine, DSCnet model construction, the PCDM point-cloud encoding, a raycast
//! scene simulator, depth metrics and the SGD training loop.
//!
//! The crate is `no_std` + `alloc`; everything here is pure computation over
//! in-memory values. File formats, threading and the CLI live in `dsc-cli`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;

pub mod config;
pub mod float;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pcdm;
pub mod resource;
pub mod rng;
pub mod sim;
pub mod tensor;
pub mod train;

pub use error::DscError;
