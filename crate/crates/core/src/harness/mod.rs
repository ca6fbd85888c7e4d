//! Experiment plumbing: configs and presets, data synthesis, replicated runs
//! with budget matching, and result summaries. Every output file is written
//! atomically, and each replicate's manifest is enough to regenerate it.

pub mod config;
pub mod data;
pub mod experiment;
pub mod io;
pub mod summarize;

pub use config::{preset, Algorithm, InnerConfig, McmcConfig, ModelSpec, RunConfig, PRESETS};
pub use data::{data_manifest_path, generate, synthesize_data, DataManifest, ObservedData};
pub use experiment::{
    budget_for, replay, run_experiment, ExperimentManifest, ExperimentOutcome, ReplicateEntry, ReplicateManifest,
};
pub use summarize::{summarize, write_summary_files, Summary};
