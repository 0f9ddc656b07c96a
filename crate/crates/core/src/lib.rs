//! Steering detection for qutrit-pair states.
//!
//! The crate is `no_std` (with `alloc`): state algebra, SDP steering
//! certificates, the F1/F2 feature encodings, dataset pipelines, the three
//! classifier families and the bound sweeps are all pure computations. File
//! formats, worker pools and the command line live in the `steerkit` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod datasets;
pub mod error;
pub mod exec;
pub mod families;
pub mod features;
pub mod learn;
pub mod measure;
pub mod qcore;
pub mod rng;
pub mod steersdp;

pub use error::{Error, Result};
