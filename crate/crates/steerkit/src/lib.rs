//! File formats, worker pool and command-line front end on top of
//! `steerkit-core`.

pub mod cli;
pub mod error;
pub mod exec;
pub mod io;

pub use steerkit_core;
