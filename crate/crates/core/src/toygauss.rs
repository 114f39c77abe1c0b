//! Two-Gaussian toy testbed: train a linear classifier on a 2-D two-class
//! mixture, sweep mean-shift "augmentations" over a grid, and compare the
//! model-sensitive affinity field against the model-blind KL field.
//!
//! The linear model makes everything analytically checkable: for a decision
//! rule `w.x + b >= 0` the exact accuracy under any mean shift is a pair of
//! Gaussian CDF evaluations.

use crate::data::{make_gaussian_mixture, GaussianMixtureSpec, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::kl_gaussian;
use crate::model::{Architecture, ModelSpec, Params};
use crate::rng::Stream;
use crate::trainer::{accuracy, train, TrainConfig, TrainRun};
use alloc::string::String;
use alloc::vec::Vec;

/// Standard normal CDF.
pub fn phi(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / core::f64::consts::SQRT_2))
}

/// The trained linear rule `predict class 0 iff w.x + b >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBoundary {
    pub w: Vec<f64>,
    pub b: f64,
}

/// Extracts the two-class decision boundary from a trained linear model.
pub fn boundary_from(spec: &ModelSpec, params: &Params) -> Result<LinearBoundary> {
    if !matches!(spec.architecture, Architecture::Linear) || spec.num_classes != 2 {
        return Err(Error::Validation(String::from(
            "boundary extraction needs a 2-class linear model",
        )));
    }
    let d = spec.input_dim();
    let w_all = params.slice("w");
    let b_all = params.slice("b");
    let w = (0..d)
        .map(|i| w_all[i] as f64 - w_all[d + i] as f64)
        .collect();
    Ok(LinearBoundary {
        w,
        b: b_all[0] as f64 - b_all[1] as f64,
    })
}

impl LinearBoundary {
    /// Unit normal of the boundary (the direction affinity is sensitive to).
    pub fn unit_normal(&self) -> Vec<f64> {
        let norm = libm::sqrt(self.w.iter().map(|x| x * x).sum::<f64>());
        self.w.iter().map(|x| x / norm).collect()
    }
}

/// Exact accuracy of the boundary when every class mean is shifted by
/// `delta`: equal priors, per-class `P(correct side)` via the Gaussian CDF.
pub fn exact_accuracy_under_shift(
    boundary: &LinearBoundary,
    gspec: &GaussianMixtureSpec,
    delta: &[f64],
) -> Result<f64> {
    gspec.validate()?;
    let d = gspec.dim;
    if boundary.w.len() != d || delta.len() != d {
        return Err(Error::Validation(String::from("dimension mismatch")));
    }
    let mut total = 0.0;
    for (k, mean) in gspec.means.iter().enumerate() {
        let cov = &gspec.covariances[k];
        let mut proj = boundary.b;
        for i in 0..d {
            proj += boundary.w[i] * (mean[i] + delta[i]);
        }
        let mut var = 0.0;
        for i in 0..d {
            for j in 0..d {
                var += boundary.w[i] * cov[i * d + j] * boundary.w[j];
            }
        }
        if var <= 0.0 {
            return Err(Error::Numerical(String::from("degenerate projected variance")));
        }
        let z = proj / libm::sqrt(var);
        // Class 0 wants the positive side, every other class the negative.
        total += if k == 0 { phi(z) } else { phi(-z) };
    }
    Ok(total / gspec.means.len() as f64)
}

/// Mean-shift sweep configuration: a square grid over `[min, max]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub resolution: usize,
    pub samples_per_cell: usize,
}

impl GridSpec {
    /// The standard plotting grid: shifts in [-3, 3]^2 at 31x31 resolution.
    pub fn standard() -> GridSpec {
        GridSpec {
            min: -3.0,
            max: 3.0,
            resolution: 31,
            samples_per_cell: 4000,
        }
    }

    pub fn axis(&self) -> Vec<f64> {
        let n = self.resolution;
        (0..n)
            .map(|i| {
                if n == 1 {
                    self.min
                } else {
                    self.min + (self.max - self.min) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

/// Affinity and KL fields over the shift grid, row-major `[i * res + j]`
/// with `i` indexing the first axis and `j` the second.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftGrid {
    pub axis: Vec<f64>,
    pub values_affinity: Vec<f64>,
    pub values_kl: Vec<f64>,
    /// Per-cell Monte Carlo SEM of the affinity estimate (binomial).
    pub values_sem: Vec<f64>,
    pub clean_acc: f64,
}

impl ShiftGrid {
    pub fn at(&self, i: usize, j: usize) -> (f64, f64, f64) {
        let idx = i * self.axis.len() + j;
        (
            self.values_affinity[idx],
            self.values_kl[idx],
            self.values_sem[idx],
        )
    }
}

/// Everything the toy experiment produces.
#[derive(Debug, Clone)]
pub struct ToyResult {
    pub model_spec: ModelSpec,
    pub run: TrainRun,
    pub boundary: LinearBoundary,
    pub grid: ShiftGrid,
}

fn shifted_spec(gspec: &GaussianMixtureSpec, delta: &[f64], samples: usize) -> GaussianMixtureSpec {
    let mut s = gspec.clone();
    for mean in &mut s.means {
        for (m, d) in mean.iter_mut().zip(delta) {
            *m += d;
        }
    }
    s.samples_per_class = samples;
    s
}

/// Monte Carlo accuracy of the model on a fresh shifted sample.
fn sample_accuracy(
    spec: &ModelSpec,
    params: &Params,
    gspec: &GaussianMixtureSpec,
    delta: &[f64],
    samples_per_class: usize,
    sample_seed: u64,
) -> Result<f64> {
    let s = shifted_spec(gspec, delta, samples_per_class);
    let ds: LabeledDataset = make_gaussian_mixture(&s, sample_seed)?.to_labeled()?;
    accuracy(spec, params, &ds)
}

/// Mean over classes (equal priors) of the KL between each shifted class
/// Gaussian and its original; labels are unshifted so this is the
/// joint-distribution divergence under the class-conditional decomposition.
pub fn kl_field_value(gspec: &GaussianMixtureSpec, delta: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (k, mean) in gspec.means.iter().enumerate() {
        let shifted: Vec<f64> = mean.iter().zip(delta).map(|(m, dd)| m + dd).collect();
        total += kl_gaussian(&shifted, &gspec.covariances[k], mean, &gspec.covariances[k])?;
    }
    Ok(total / gspec.means.len() as f64)
}

/// Trains one linear model on clean samples, then fills the affinity and KL
/// fields over the grid with fresh per-cell validation draws.
pub fn run_toy_experiment(
    gspec: &GaussianMixtureSpec,
    grid: &GridSpec,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<ToyResult> {
    gspec.validate()?;
    if gspec.dim != 2 || gspec.means.len() != 2 {
        return Err(Error::Validation(String::from(
            "toy experiment requires a two-class 2-D mixture",
        )));
    }
    let model_spec = ModelSpec {
        architecture: Architecture::Linear,
        input_shape: (1, 1, 2),
        num_classes: 2,
        init_scale: 1.0,
    };
    // Toy points are already O(1); no standardization, so the learned
    // boundary lives in raw coordinates.
    let ds_train = make_gaussian_mixture(gspec, seed)?.to_labeled()?;
    let val_spec = shifted_spec(gspec, &[0.0, 0.0], grid.samples_per_cell / 2);
    let val_seed = Stream::indexed(seed, "toyval", &[]).next_u64();
    let ds_val = make_gaussian_mixture(&val_spec, val_seed)?.to_labeled()?;
    let run = train(&model_spec, &ds_train, &ds_val, train_cfg)?;
    let boundary = boundary_from(&model_spec, &run.final_params)?;

    let clean_acc = accuracy(&model_spec, &run.final_params, &ds_val)?;
    let n_val = ds_val.len() as f64;
    let clean_var = clean_acc * (1.0 - clean_acc) / n_val;

    let axis = grid.axis();
    let res = grid.resolution;
    let per_class = grid.samples_per_cell / 2;
    let mut values_affinity = Vec::with_capacity(res * res);
    let mut values_kl = Vec::with_capacity(res * res);
    let mut values_sem = Vec::with_capacity(res * res);
    for (i, &dx) in axis.iter().enumerate() {
        for (j, &dy) in axis.iter().enumerate() {
            let delta = [dx, dy];
            let cell_seed = Stream::indexed(seed, "cell", &[i as u64, j as u64]).next_u64();
            let acc = sample_accuracy(
                &model_spec,
                &run.final_params,
                gspec,
                &delta,
                per_class,
                cell_seed,
            )?;
            let n_cell = (2 * per_class) as f64;
            values_affinity.push(acc - clean_acc);
            values_sem.push(libm::sqrt(acc * (1.0 - acc) / n_cell + clean_var));
            values_kl.push(kl_field_value(gspec, &delta)?);
        }
    }
    Ok(ToyResult {
        model_spec,
        run,
        boundary,
        grid: ShiftGrid {
            axis,
            values_affinity,
            values_kl,
            values_sem,
            clean_acc,
        },
    })
}

/// Monte Carlo affinity at one arbitrary shift, with its binomial SEM;
/// used to probe boundary-parallel vs. perpendicular directions.
pub fn affinity_at(
    result: &ToyResult,
    gspec: &GaussianMixtureSpec,
    delta: &[f64],
    samples_per_class: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let acc = sample_accuracy(
        &result.model_spec,
        &result.run.final_params,
        gspec,
        delta,
        samples_per_class,
        seed,
    )?;
    let n = (2 * samples_per_class) as f64;
    let sem = libm::sqrt(acc * (1.0 - acc) / n);
    Ok((acc - result.grid.clean_acc, sem))
}
