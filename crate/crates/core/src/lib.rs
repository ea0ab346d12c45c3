//! Bayesian model-averaged sparse identification of coupled dynamical systems.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numerical piece of the
//! pipeline: trajectory generation for phase-oscillator networks and for a pair of
//! coupled metronomes, the candidate basis dictionary, the spike-and-slab posterior
//! with coefficients integrated out, a parallel-tempering sampler over indicator
//! bits and scale hyperparameters, and the point-estimate metrics.
//!
//! File formats, configuration parsing, the command line, and thread pools live in
//! the `bmsi` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bayes;
pub mod dictionary;
mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod metronome;
pub mod oscillator;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
