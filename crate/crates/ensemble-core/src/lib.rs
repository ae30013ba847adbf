//! Discrete β-ensembles on shifted lattices.
//!
//! The crate evaluates ensemble weights and exact partition functions,
//! solves the constrained equilibrium problem for densities bounded by
//! θ⁻¹, tabulates large-deviation rate functions for the rightmost
//! particle, evaluates Jack-measure specializations, and runs a seeded
//! Metropolis–Hastings sampler. It is `no_std` (with `alloc`) so the
//! numerical core can be embedded anywhere; file formats and the
//! command-line front end live in the `ensemble-lab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod equilibrium;
pub(crate) mod kernel;
pub mod error;
pub mod jack;
pub mod math;
pub mod measures;
pub mod quad;
pub mod rates;
pub mod sampler;
pub mod specfun;
pub mod statespace;

pub use error::{Error, Result};
