//! Two-Gaussian toy experiment: trains a linear model, sweeps mean shifts
//! over a grid, and writes the affinity and KL fields as TSV matrices.

use crate::config::ToyBlock;
use crate::error::Result;
use augmetrics_core::data::GaussianMixtureSpec;
use augmetrics_core::toygauss::{run_toy_experiment, GridSpec, ShiftGrid, ToyResult};
use augmetrics_core::trainer::{AugMode, LrSchedule, TrainConfig};
use augmetrics_core::transforms::Policy;
use std::path::Path;

pub fn toy_train_config(toy: &ToyBlock, seed: u64) -> TrainConfig {
    TrainConfig {
        steps: toy.steps,
        batch_size: 64,
        base_lr: 0.1,
        lr_schedule: LrSchedule::Cosine,
        momentum: 0.9,
        l2_coeff: 1e-4,
        l2_off_step: None,
        policy: Policy::identity(),
        mode: AugMode::Dynamic,
        switch_off_step: None,
        seed,
        log_every: 50,
        train_acc_threshold: 0.97,
        final_loss_window: 10,
        checkpoint_steps: Vec::new(),
    }
}

pub fn run_toy(toy: &ToyBlock, seed: u64) -> Result<ToyResult> {
    let gspec = GaussianMixtureSpec::symmetric_2d(toy.separation, toy.samples_per_class);
    let grid = GridSpec {
        min: toy.grid_min,
        max: toy.grid_max,
        resolution: toy.resolution,
        samples_per_cell: toy.samples_per_cell,
    };
    Ok(run_toy_experiment(&gspec, &grid, &toy_train_config(toy, seed), seed)?)
}

/// Renders one field as a TSV matrix: a header row of shift-y values, then
/// one row per shift-x value, first cell being that x. Cell (i, j) holds the
/// field at shift (axis[i], axis[j]).
fn field_tsv(grid: &ShiftGrid, values: &[f64]) -> String {
    let n = grid.axis.len();
    let mut text = String::from("dx\\dy");
    for v in &grid.axis {
        text.push_str(&format!("\t{v}"));
    }
    text.push('\n');
    for i in 0..n {
        text.push_str(&format!("{}", grid.axis[i]));
        for j in 0..n {
            text.push_str(&format!("\t{}", values[i * n + j]));
        }
        text.push('\n');
    }
    text
}

/// Runs the toy experiment and writes `toy_affinity.tsv` and `toy_kl.tsv`
/// into `out`. Returns the result for further inspection.
pub fn emit_toy(toy: &ToyBlock, seed: u64, out: &Path) -> Result<ToyResult> {
    let result = run_toy(toy, seed)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("toy_affinity.tsv"),
        field_tsv(&result.grid, &result.grid.values_affinity),
    )?;
    std::fs::write(
        out.join("toy_kl.tsv"),
        field_tsv(&result.grid, &result.grid.values_kl),
    )?;
    Ok(result)
}
