//! File formats, run manifests and the command-line front end for the
//! `ensemble-core` numerics.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;

pub use error::{LabError, LabResult};
