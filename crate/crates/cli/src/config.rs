//! Experiment configuration: one TOML document describing datasets, model,
//! training recipe, policies, seeds, and which measurements to run.

use crate::error::{CliError, Result};
use augmetrics_core::model::{Architecture, ModelSpec};
use augmetrics_core::rng::derive_seed;
use augmetrics_core::trainer::{AugMode, LrSchedule, TrainConfig};
use augmetrics_core::transforms::Policy;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Affinity,
    Diversity,
    Entropy,
    Switchoff,
    StaticCompare,
    Toygauss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBlock {
    /// `synthetic` (generated oriented-bar images) or `cifar` (binary
    /// label+planes records; requires `path`).
    pub source: String,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default = "d_classes")]
    pub classes: usize,
    #[serde(default = "d_side")]
    pub side: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// `linear`, `mlp`, or `tiny_cnn`.
    pub architecture: String,
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    #[serde(default = "d_channels")]
    pub channels: usize,
    #[serde(default = "d_one")]
    pub init_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    pub steps: usize,
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub base_lr: f64,
    /// `cosine`, `constant`, or `step`.
    #[serde(default = "d_sched")]
    pub lr_schedule: String,
    #[serde(default)]
    pub decay_step: Option<usize>,
    #[serde(default = "d_decay_factor")]
    pub decay_factor: f64,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default = "d_l2")]
    pub l2: f64,
    #[serde(default)]
    pub l2_off_step: Option<usize>,
    #[serde(default = "d_log_every")]
    pub log_every: usize,
    #[serde(default = "d_threshold")]
    pub train_acc_threshold: f64,
    #[serde(default = "d_window")]
    pub final_loss_window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyBlock {
    #[serde(default = "d_one")]
    pub separation: f64,
    #[serde(default = "d_toy_train")]
    pub samples_per_class: usize,
    #[serde(default = "d_grid_min")]
    pub grid_min: f64,
    #[serde(default = "d_grid_max")]
    pub grid_max: f64,
    #[serde(default = "d_resolution")]
    pub resolution: usize,
    #[serde(default = "d_cell")]
    pub samples_per_cell: usize,
    #[serde(default = "d_toy_steps")]
    pub steps: usize,
}

impl Default for ToyBlock {
    fn default() -> Self {
        ToyBlock {
            separation: 1.0,
            samples_per_class: d_toy_train(),
            grid_min: d_grid_min(),
            grid_max: d_grid_max(),
            resolution: d_resolution(),
            samples_per_cell: d_cell(),
            steps: d_toy_steps(),
        }
    }
}

fn d_classes() -> usize { 2 }
fn d_side() -> usize { 8 }
fn d_hidden() -> usize { 32 }
fn d_channels() -> usize { 8 }
fn d_one() -> f64 { 1.0 }
fn d_lr() -> f64 { 0.1 }
fn d_sched() -> String { "cosine".into() }
fn d_decay_factor() -> f64 { 10.0 }
fn d_momentum() -> f64 { 0.9 }
fn d_l2() -> f64 { 5e-4 }
fn d_log_every() -> usize { 50 }
fn d_threshold() -> f64 { 0.97 }
fn d_window() -> usize { 10 }
fn d_candidates() -> usize { 5 }
fn d_toy_train() -> usize { 2048 }
fn d_grid_min() -> f64 { -3.0 }
fn d_grid_max() -> f64 { 3.0 }
fn d_resolution() -> usize { 31 }
fn d_cell() -> usize { 4000 }
fn d_toy_steps() -> usize { 800 }
fn d_tasks() -> Vec<Task> {
    vec![Task::Affinity, Task::Diversity, Task::Entropy]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetBlock,
    pub model: ModelBlock,
    pub train: TrainBlock,
    #[serde(default)]
    pub policies: Vec<String>,
    pub seeds: Vec<u64>,
    #[serde(default = "d_tasks")]
    pub tasks: Vec<Task>,
    /// Number of evenly spaced switch-off candidate steps (30%..95%).
    #[serde(default = "d_candidates")]
    pub switch_candidates: usize,
    #[serde(default)]
    pub toy: Option<ToyBlock>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(CliError::Config(msg));
        if self.seeds.is_empty() {
            return err("seeds: must be non-empty".into());
        }
        let toy_only = self.tasks == vec![Task::Toygauss];
        if self.policies.is_empty() && !toy_only {
            return err("policies: must be non-empty unless tasks is exactly [toygauss]".into());
        }
        if self.tasks.is_empty() {
            return err("tasks: must be non-empty".into());
        }
        match self.dataset.source.as_str() {
            "synthetic" => {}
            "cifar" => {
                if self.dataset.path.is_none() {
                    return err("dataset.path: required when source is cifar".into());
                }
            }
            other => return err(format!("dataset.source: unknown source `{other}`")),
        }
        match self.model.architecture.as_str() {
            "linear" | "mlp" | "tiny_cnn" => {}
            other => return err(format!("model.architecture: unknown `{other}`")),
        }
        match self.train.lr_schedule.as_str() {
            "cosine" | "constant" => {}
            "step" => {
                if self.train.decay_step.is_none() {
                    return err("train.decay_step: required for the step schedule".into());
                }
            }
            other => return err(format!("train.lr_schedule: unknown `{other}`")),
        }
        if self.train.batch_size == 0 || self.train.batch_size > self.dataset.train_size {
            return err("train.batch_size: must be in [1, dataset.train_size]".into());
        }
        if self.tasks.contains(&Task::Switchoff) && self.switch_candidates == 0 {
            return err("switch_candidates: must be >= 1 for the switchoff task".into());
        }
        // Parse all policy labels up front so bad labels fail fast.
        for label in &self.policies {
            Policy::parse(label)
                .map_err(|e| CliError::Config(format!("policies: `{label}`: {e}")))?;
        }
        if self.tasks.contains(&Task::Toygauss) && self.toy.is_none() && !toy_only {
            return err("toy: block required when toygauss runs alongside other tasks".into());
        }
        Ok(())
    }

    /// Stable content hash over the canonical JSON form; keys run caching.
    pub fn hash(&self) -> u64 {
        let canonical = serde_json::to_string(self).expect("config serializes");
        derive_seed(0xc0f1, &canonical)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        let ch = if self.dataset.source == "cifar" { 3 } else { 1 };
        (self.dataset.side, self.dataset.side, ch)
    }

    pub fn model_spec(&self) -> ModelSpec {
        let architecture = match self.model.architecture.as_str() {
            "linear" => Architecture::Linear,
            "mlp" => Architecture::Mlp { hidden: self.model.hidden },
            _ => Architecture::TinyCnn { channels: self.model.channels },
        };
        ModelSpec {
            architecture,
            input_shape: self.input_shape(),
            num_classes: self.dataset.classes,
            init_scale: self.model.init_scale,
        }
    }

    pub fn train_config(&self, policy: Policy, seed: u64) -> TrainConfig {
        let lr_schedule = match self.train.lr_schedule.as_str() {
            "constant" => LrSchedule::Constant,
            "step" => LrSchedule::StepDecay {
                step: self.train.decay_step.unwrap_or(self.train.steps / 2),
                factor: self.train.decay_factor,
            },
            _ => LrSchedule::Cosine,
        };
        TrainConfig {
            steps: self.train.steps,
            batch_size: self.train.batch_size,
            base_lr: self.train.base_lr,
            lr_schedule,
            momentum: self.train.momentum,
            l2_coeff: self.train.l2,
            l2_off_step: self.train.l2_off_step,
            policy,
            mode: AugMode::Dynamic,
            switch_off_step: None,
            seed,
            log_every: self.train.log_every,
            train_acc_threshold: self.train.train_acc_threshold,
            final_loss_window: self.train.final_loss_window,
            checkpoint_steps: Vec::new(),
        }
    }
}

/// A small synthetic-dataset config used by tests and as a starting point.
pub fn example_config() -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetBlock {
            source: "synthetic".into(),
            path: None,
            classes: 2,
            side: 8,
            train_size: 512,
            val_size: 256,
            test_size: 256,
            seed: 0,
        },
        model: ModelBlock {
            architecture: "linear".into(),
            hidden: d_hidden(),
            channels: d_channels(),
            init_scale: 1.0,
        },
        train: TrainBlock {
            steps: 300,
            batch_size: 32,
            base_lr: 0.1,
            lr_schedule: "cosine".into(),
            decay_step: None,
            decay_factor: 10.0,
            momentum: 0.9,
            l2: 5e-4,
            l2_off_step: None,
            log_every: 25,
            train_acc_threshold: 0.97,
            final_loss_window: 10,
        },
        policies: vec!["Identity".into(), "FlipLR(50%)".into()],
        seeds: vec![1, 2, 3],
        tasks: d_tasks(),
        switch_candidates: d_candidates(),
        toy: None,
    }
}
