//! Benchmark simulators.

pub mod gaussian;
pub mod graph;
pub mod normal;
pub mod oracle;

pub use gaussian::{GaussianModel, GaussianModelConfig};
pub use graph::{Graph, GraphModel, GraphModelConfig, SeedGraph};
