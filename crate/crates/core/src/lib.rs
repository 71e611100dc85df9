//! Decoupled annealing posterior sampling for inverse problems with diffusion
//! priors, together with a DPS baseline, latent-space variant, exact
//! posterior oracles, distribution metrics and an experiment harness.

pub mod error;
pub mod forward;
pub mod harness;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod prior;
pub mod rng;
pub mod sampler;
pub mod schedule;

pub use error::{DapsError, Result};
