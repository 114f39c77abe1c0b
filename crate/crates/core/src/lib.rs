//! Quantifies data-augmentation policies through two model-dependent
//! measures: affinity (accuracy shift of a clean-trained model on augmented
//! validation data) and diversity (how hard the augmented training data is to
//! fit), plus exact conditional-entropy and steps-to-threshold diversity
//! proxies and switch-off lift.
//!
//! The crate is `no_std` + `alloc`: it holds the datasets, the transform zoo,
//! compact differentiable classifiers, the SGD trainer, and the metric
//! computations. File formats, the CLI, and experiment orchestration live in
//! the companion `augmetrics` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod image;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod toygauss;
pub mod trainer;
pub mod transforms;

pub use error::{Error, Result};
pub use image::Image;
