//! Experiment harness over the core augmentation-metrics library: TOML
//! configs, dataset loading, checkpoint files, parallel sweeps, and reports.

pub mod ckpt;
pub mod config;
pub mod datasets;
pub mod error;
pub mod harness;
pub mod report;
pub mod toy;
