//! SGD-with-momentum training with LR schedules, dynamic/static augmentation,
//! mid-training switch-off, and minimal checkpoints.
//!
//! Every source of randomness (shuffling, augmentation) is a pure function of
//! `(seed, purpose, step)`, so batch selection never depends on execution
//! history and a checkpoint only needs `(step, params, velocity)`.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{evaluate, init, ModelSpec, Params};
use crate::rng::Stream;
use crate::transforms::{apply_policy_dynamic, materialize_static, Policy};
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub enum LrSchedule {
    Cosine,
    /// LR divides by `factor` at and after `step`.
    StepDecay { step: usize, factor: f64 },
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugMode {
    /// Fresh transform draw per image per visit.
    Dynamic,
    /// One draw per image, materialized before step 0.
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub lr_schedule: LrSchedule,
    pub momentum: f64,
    pub l2_coeff: f64,
    /// L2 becomes 0 from this step on.
    pub l2_off_step: Option<usize>,
    pub policy: Policy,
    pub mode: AugMode,
    /// Augmentation is disabled from this step on.
    pub switch_off_step: Option<usize>,
    pub seed: u64,
    pub log_every: usize,
    pub train_acc_threshold: f64,
    /// Trailing window of logged losses averaged into `final_train_loss`.
    pub final_loss_window: usize,
    /// Steps at which `(params, velocity)` entering the step are recorded.
    pub checkpoint_steps: Vec<usize>,
}

impl TrainConfig {
    /// Desk-scale defaults: minutes-long runs that preserve the full-scale
    /// recipe's proportions.
    pub fn desk_scale(policy: Policy, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: 3000,
            batch_size: 64,
            base_lr: 0.1,
            lr_schedule: LrSchedule::Cosine,
            momentum: 0.9,
            l2_coeff: 5e-4,
            l2_off_step: None,
            policy,
            mode: AugMode::Dynamic,
            switch_off_step: None,
            seed,
            log_every: 50,
            train_acc_threshold: 0.97,
            final_loss_window: 10,
            checkpoint_steps: Vec::new(),
        }
    }

    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > train_len {
            return Err(Error::Validation(String::from(
                "batch size must be in [1, train set size]",
            )));
        }
        if let Some(s) = self.switch_off_step {
            if s >= self.steps {
                return Err(Error::Validation(String::from(
                    "switch_off_step must be < steps",
                )));
            }
        }
        if self.log_every == 0 || self.final_loss_window == 0 {
            return Err(Error::Validation(String::from(
                "log_every and final_loss_window must be >= 1",
            )));
        }
        if let LrSchedule::StepDecay { factor, .. } = self.lr_schedule {
            if factor <= 0.0 {
                return Err(Error::Validation(String::from("decay factor must be > 0")));
            }
        }
        Ok(())
    }
}

pub fn lr_at(config: &TrainConfig, step: usize) -> f64 {
    match config.lr_schedule {
        LrSchedule::Cosine => {
            let t = step as f64 / config.steps as f64;
            config.base_lr * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * t))
        }
        LrSchedule::StepDecay { step: at, factor } => {
            if step >= at {
                config.base_lr / factor
            } else {
                config.base_lr
            }
        }
        LrSchedule::Constant => config.base_lr,
    }
}

/// Optimizer state entering a step; enough to resume bit-exactly because
/// batch selection and augmentation streams are derived from the step index.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub params: Params,
    pub velocity: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub final_params: Params,
    pub final_velocity: Vec<f32>,
    pub log: Vec<LogEntry>,
    pub checkpoints: BTreeMap<usize, Checkpoint>,
    pub steps_to_threshold: Option<usize>,
    /// Mean train loss over the last `final_loss_window` logged steps.
    pub final_train_loss: f64,
    pub final_val_acc: f64,
    /// Instrumentation: number of per-image policy applications at or after
    /// `switch_off_step` (must be zero) and in total.
    pub aug_applications_total: usize,
    pub aug_applications_after_switch: usize,
}

/// Normalizes one image with the dataset's fitted stats and flattens it.
fn preprocess(ds: &LabeledDataset, img: &crate::image::Image) -> Vec<f32> {
    match &ds.stats {
        Some(stats) => {
            let ch = img.channels;
            img.values
                .iter()
                .enumerate()
                .map(|(i, &v)| (v - stats.mean[i % ch]) / stats.std[i % ch])
                .collect()
        }
        None => img.values.clone(),
    }
}

/// Full-dataset accuracy, evaluated in batches with the dataset's own stats.
pub fn accuracy(spec: &ModelSpec, params: &Params, ds: &LabeledDataset) -> Result<f64> {
    let mut correct = 0.0;
    let mut total = 0usize;
    for chunk_start in (0..ds.len()).step_by(256) {
        let end = (chunk_start + 256).min(ds.len());
        let inputs: Vec<Vec<f32>> = (chunk_start..end)
            .map(|i| preprocess(ds, &ds.images[i]))
            .collect();
        let labels = &ds.labels[chunk_start..end];
        let eval = evaluate(spec, params, &inputs, labels, 0.0, false)?;
        correct += eval.accuracy * (end - chunk_start) as f64;
        total += end - chunk_start;
    }
    Ok(correct / total as f64)
}

/// Mean log-sum-exp of logits over a dataset (the density proxy).
pub fn dataset_mean_log_likelihood(
    spec: &ModelSpec,
    params: &Params,
    ds: &LabeledDataset,
) -> Result<f64> {
    let inputs: Vec<Vec<f32>> = ds.images.iter().map(|img| preprocess(ds, img)).collect();
    crate::model::mean_log_likelihood(spec, params, &inputs, &ds.labels)
}

struct EpochPerm {
    epoch: usize,
    perm: Vec<usize>,
}

/// Training-set index for global sample position `g`, shuffled per epoch.
fn batch_index(seed: u64, n: usize, g: usize, cache: &mut Option<EpochPerm>) -> usize {
    let epoch = g / n;
    let pos = g % n;
    let stale = cache.as_ref().map(|c| c.epoch != epoch).unwrap_or(true);
    if stale {
        let mut s = Stream::indexed(seed, "shuffle", &[epoch as u64]);
        *cache = Some(EpochPerm {
            epoch,
            perm: s.permutation(n),
        });
    }
    cache.as_ref().unwrap().perm[pos]
}

/// Trains from scratch per the config. Deterministic per seed; two configs
/// differing only in policy share the same initial params.
pub fn train(
    spec: &ModelSpec,
    ds_train: &LabeledDataset,
    ds_val: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainRun> {
    config.validate(ds_train.len())?;
    config.policy.validate_for(
        ds_train.images[0].height,
        ds_train.images[0].width,
    )?;
    let params = init(spec, config.seed)?;
    let velocity = alloc::vec![0.0f32; params.values.len()];
    let effective_train = if config.mode == AugMode::Static && !config.policy.is_identity() {
        materialize_static(&config.policy, ds_train, config.seed)
    } else {
        ds_train.clone()
    };
    run_loop(spec, &effective_train, ds_val, config, 0, params, velocity, true)
}

/// Resumes a run from one of its checkpoints with augmentation disabled,
/// training on clean data to the original horizon. LR and batch selection
/// stay functions of the absolute step, so a clean run resumes bit-exactly.
pub fn resume_without_augmentation(
    spec: &ModelSpec,
    ds_train_clean: &LabeledDataset,
    ds_val: &LabeledDataset,
    run: &TrainRun,
    from_step: usize,
) -> Result<TrainRun> {
    if from_step == run.config.steps {
        return Ok(run.clone());
    }
    let ckpt = run
        .checkpoints
        .get(&from_step)
        .ok_or(Error::MissingCheckpoint { step: from_step })?;
    run_loop(
        spec,
        ds_train_clean,
        ds_val,
        &run.config,
        from_step,
        ckpt.params.clone(),
        ckpt.velocity.clone(),
        false,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    spec: &ModelSpec,
    ds_train: &LabeledDataset,
    ds_val: &LabeledDataset,
    config: &TrainConfig,
    start_step: usize,
    mut params: Params,
    mut velocity: Vec<f32>,
    augment: bool,
) -> Result<TrainRun> {
    let n = ds_train.len();
    let dynamic_policy =
        augment && config.mode == AugMode::Dynamic && !config.policy.is_identity();
    let mut log = Vec::new();
    let mut checkpoints = BTreeMap::new();
    let mut perm_cache: Option<EpochPerm> = None;
    let mut aug_total = 0usize;
    let mut aug_after_switch = 0usize;

    for step in start_step..config.steps {
        if config.checkpoint_steps.contains(&step) {
            checkpoints.insert(
                step,
                Checkpoint {
                    step,
                    params: params.clone(),
                    velocity: velocity.clone(),
                },
            );
        }
        let switched_off = config.switch_off_step.map(|s| step >= s).unwrap_or(false);
        let l2 = match config.l2_off_step {
            Some(s) if step >= s => 0.0,
            _ => config.l2_coeff,
        };
        let lr = lr_at(config, step);

        let mut inputs = Vec::with_capacity(config.batch_size);
        let mut labels = Vec::with_capacity(config.batch_size);
        for slot in 0..config.batch_size {
            let idx = batch_index(config.seed, n, step * config.batch_size + slot, &mut perm_cache);
            let img = &ds_train.images[idx];
            let img = if dynamic_policy && !switched_off {
                aug_total += 1;
                if switched_off {
                    aug_after_switch += 1;
                }
                let mut s = Stream::indexed(config.seed, "aug", &[step as u64, slot as u64]);
                apply_policy_dynamic(&config.policy, img, &mut s)
            } else {
                img.clone()
            };
            inputs.push(preprocess(ds_train, &img));
            labels.push(ds_train.labels[idx]);
        }

        let eval = match evaluate(spec, &params, &inputs, &labels, l2, true) {
            Ok(e) => e,
            Err(Error::Numerical(_)) => return Err(Error::Diverged { step }),
            Err(e) => return Err(e),
        };
        if !eval.loss.is_finite() {
            return Err(Error::Diverged { step });
        }

        if step % config.log_every == 0 || step + 1 == config.steps {
            let val_acc = accuracy(spec, &params, ds_val)?;
            log.push(LogEntry {
                step,
                lr,
                train_loss: eval.loss,
                train_acc: eval.accuracy,
                val_acc,
            });
        }

        let grad = eval.grad.as_ref().unwrap();
        for ((p, v), &g) in params.values.iter_mut().zip(&mut velocity).zip(grad) {
            *v = (config.momentum * *v as f64 - lr * g) as f32;
            *p += *v;
        }
        if !params.all_finite() {
            return Err(Error::Diverged { step });
        }
    }

    let steps_to_threshold = log
        .iter()
        .find(|e| e.train_acc >= config.train_acc_threshold)
        .map(|e| e.step);
    let tail = log.len().saturating_sub(config.final_loss_window);
    let tail_losses = &log[tail..];
    let final_train_loss = if tail_losses.is_empty() {
        f64::NAN
    } else {
        tail_losses.iter().map(|e| e.train_loss).sum::<f64>() / tail_losses.len() as f64
    };
    let final_val_acc = if start_step >= config.steps {
        accuracy(spec, &params, ds_val)?
    } else {
        log.last().map(|e| e.val_acc).unwrap_or(f64::NAN)
    };
    Ok(TrainRun {
        config: config.clone(),
        final_params: params,
        final_velocity: velocity,
        log,
        checkpoints,
        steps_to_threshold,
        final_train_loss,
        final_val_acc,
        aug_applications_total: aug_total,
        aug_applications_after_switch: aug_after_switch,
    })
}
