//! Likelihood-free Bayesian inference for simulators written as a deterministic
//! transform of tractable randomness.
//!
//! The crate provides rare-event ABC-SMC2 (an outer SMC sampler on the
//! parameters whose likelihood ratios come from an inner rare-event SMC on the
//! latent randomness of each particle) together with ABC-SMC, ABC-MCMC and the
//! inner rare-event sampler on its own. Two simulators ship with it: a
//! truncated Gaussian and a duplication-divergence random graph.

pub mod adapt;
pub mod error;
#[cfg(feature = "harness")]
pub mod harness;
pub mod inner;
pub mod latent;
pub mod mcmc;
pub mod model;
pub mod models;
pub mod outer;
mod par;
pub mod rng;
pub mod serde_inf;
pub mod slice;
pub mod weights;

pub use error::{Error, Result};
