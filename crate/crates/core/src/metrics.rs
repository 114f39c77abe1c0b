//! Affinity, the Diversity family, Switch-off Lift, paired errors, KL
//! divergence, and rank correlation — pure functions over runs and datasets.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{chol_logdet, chol_solve, cholesky};
use crate::model::{ModelSpec, Params};
use crate::trainer::{accuracy, TrainRun};
use crate::transforms::{augment_validation, enumerate_outcomes, Policy};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Accuracy of the clean-trained model on a one-pass augmented copy of the
/// validation set, minus its accuracy on the clean validation set.
pub fn affinity(
    spec: &ModelSpec,
    clean_params: &Params,
    val: &LabeledDataset,
    policy: &Policy,
    seed: u64,
) -> Result<f64> {
    if policy.is_identity() {
        return Ok(0.0);
    }
    let augmented = augment_validation(policy, val, seed);
    Ok(accuracy(spec, clean_params, &augmented)? - accuracy(spec, clean_params, val)?)
}

/// Mean final training loss across seed-replicated runs.
pub fn diversity_loss(runs: &[TrainRun]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::Validation(String::from("no runs")));
    }
    let mut total = 0.0;
    for run in runs {
        if !run.final_train_loss.is_finite() {
            return Err(Error::Numerical(String::from(
                "divergent run in diversity aggregation",
            )));
        }
        total += run.final_train_loss;
    }
    Ok(total / runs.len() as f64)
}

/// Conditional entropy `H(X'|X)` in nats: the sum, over the policy's
/// independently drawn transforms, of each exact outcome distribution's
/// entropy. Errors if any constituent transform is continuous.
pub fn diversity_entropy(policy: &Policy, height: usize, width: usize) -> Result<f64> {
    let mut total = 0.0;
    for op in policy.ops_in_order() {
        total += enumerate_outcomes(op, height, width)?.entropy();
    }
    Ok(total)
}

/// First logged step at which training accuracy reached the threshold.
pub fn steps_to_threshold(run: &TrainRun) -> Option<usize> {
    run.steps_to_threshold
}

/// Final validation and test accuracy of one run; the unit of pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunScores {
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Picks the switch-off step with the best mean final validation accuracy,
/// then reports the mean paired test-accuracy gain over the unswitched base
/// runs at that step. Candidates must be seed-aligned with `base`.
pub fn switch_off_lift(
    base: &[RunScores],
    switched_by_step: &BTreeMap<usize, Vec<RunScores>>,
) -> Result<(f64, usize)> {
    if switched_by_step.is_empty() {
        return Err(Error::Validation(String::from("no switch-off candidates")));
    }
    if base.is_empty() {
        return Err(Error::Validation(String::from("no base runs")));
    }
    let mut best: Option<(usize, f64)> = None;
    for (&step, scores) in switched_by_step {
        if scores.len() != base.len() {
            return Err(Error::Validation(format!(
                "candidate step {step} has {} runs, base has {}",
                scores.len(),
                base.len()
            )));
        }
        let mean_val = scores.iter().map(|s| s.val_acc).sum::<f64>() / scores.len() as f64;
        let better = match best {
            None => true,
            Some((_, v)) => mean_val > v,
        };
        if better {
            best = Some((step, mean_val));
        }
    }
    let (best_step, _) = best.unwrap();
    let winners = &switched_by_step[&best_step];
    let lift = winners
        .iter()
        .zip(base)
        .map(|(s, b)| s.test_acc - b.test_acc)
        .sum::<f64>()
        / base.len() as f64;
    Ok((lift, best_step))
}

/// Per-pair differences first, statistics second: `d_i = a_i - b_i`,
/// returns `(mean(d), stddev(d, sample) / sqrt(n))`.
pub fn paired_sem(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::Validation(String::from("need at least 2 pairs")));
    }
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, libm::sqrt(var) / libm::sqrt(n as f64)))
}

/// SEM of a difference in means when pairing is ignored:
/// `sqrt(var_a/n_a + var_b/n_b)` with sample variances.
pub fn unpaired_diff_sem(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Validation(String::from("need at least 2 values per arm")));
    }
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
    };
    Ok(libm::sqrt(var(a) / a.len() as f64 + var(b) / b.len() as f64))
}

/// Closed-form KL divergence between multivariate Gaussians, in nats:
/// `0.5 (tr(S1^-1 S0) + (m1-m0)' S1^-1 (m1-m0) - d + ln det S1 / det S0)`.
pub fn kl_gaussian(mean0: &[f64], cov0: &[f64], mean1: &[f64], cov1: &[f64]) -> Result<f64> {
    let d = mean0.len();
    if mean1.len() != d || cov0.len() != d * d || cov1.len() != d * d {
        return Err(Error::Validation(String::from("dimension mismatch")));
    }
    let l0 = cholesky(cov0, d)?;
    let l1 = cholesky(cov1, d)?;
    let mut trace = 0.0;
    for j in 0..d {
        let col: Vec<f64> = (0..d).map(|i| cov0[i * d + j]).collect();
        let x = chol_solve(&l1, d, &col);
        trace += x[j];
    }
    let delta: Vec<f64> = mean1.iter().zip(mean0).map(|(a, b)| a - b).collect();
    let y = chol_solve(&l1, d, &delta);
    let mahal: f64 = delta.iter().zip(&y).map(|(a, b)| a * b).sum();
    Ok(0.5 * (trace + mahal - d as f64 + chol_logdet(&l1, d) - chol_logdet(&l0, d)))
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("non-finite rank input"));
    let mut out = alloc::vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Ties share the average rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[order[k]] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::Validation(String::from(
            "need at least 3 aligned observations",
        )));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Numerical(String::from("constant ranks")));
    }
    Ok(cov / libm::sqrt(vx * vy))
}

/// One results row; `None` renders as a blank cell (not computed, or a
/// threshold that was never reached).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub policy_label: String,
    pub affinity: Option<f64>,
    pub affinity_sem: Option<f64>,
    pub diversity_loss: Option<f64>,
    pub diversity_entropy: Option<f64>,
    pub steps_to_threshold: Option<usize>,
    pub test_acc: Option<f64>,
    pub test_acc_sem: Option<f64>,
    pub switch_off_lift: Option<f64>,
    pub best_switch_step: Option<usize>,
    pub num_seeds: usize,
}

impl MetricsRecord {
    pub fn blank(policy_label: String, num_seeds: usize) -> MetricsRecord {
        MetricsRecord {
            policy_label,
            affinity: None,
            affinity_sem: None,
            diversity_loss: None,
            diversity_entropy: None,
            steps_to_threshold: None,
            test_acc: None,
            test_acc_sem: None,
            switch_off_lift: None,
            best_switch_step: None,
            num_seeds,
        }
    }

    pub fn csv_header() -> &'static str {
        "policy_label,affinity,affinity_sem,diversity_loss,diversity_entropy,\
         steps_to_threshold,test_acc,test_acc_sem,switch_off_lift,best_switch_step,num_seeds"
    }

    pub fn to_csv_row(&self) -> String {
        fn f(x: Option<f64>) -> String {
            x.map(|v| format!("{v}")).unwrap_or_default()
        }
        fn u(x: Option<usize>) -> String {
            x.map(|v| v.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.policy_label,
            f(self.affinity),
            f(self.affinity_sem),
            f(self.diversity_loss),
            f(self.diversity_entropy),
            u(self.steps_to_threshold),
            f(self.test_acc),
            f(self.test_acc_sem),
            f(self.switch_off_lift),
            u(self.best_switch_step),
            self.num_seeds
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<MetricsRecord> {
        // Policy labels may contain commas (e.g. `Crop(4,100%)`), so split
        // the 10 numeric cells off from the right; the remainder is the label.
        let mut cells: Vec<&str> = line.rsplitn(11, ',').collect();
        if cells.len() != 11 {
            return Err(Error::Format(format!(
                "expected 11 cells, found {}",
                cells.len()
            )));
        }
        cells.reverse();
        fn f(cell: &str) -> Result<Option<f64>> {
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse()
                .map(Some)
                .map_err(|_| Error::Format(format!("bad float `{cell}`")))
        }
        fn u(cell: &str) -> Result<Option<usize>> {
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse()
                .map(Some)
                .map_err(|_| Error::Format(format!("bad count `{cell}`")))
        }
        Ok(MetricsRecord {
            policy_label: cells[0].to_string(),
            affinity: f(cells[1])?,
            affinity_sem: f(cells[2])?,
            diversity_loss: f(cells[3])?,
            diversity_entropy: f(cells[4])?,
            steps_to_threshold: u(cells[5])?,
            test_acc: f(cells[6])?,
            test_acc_sem: f(cells[7])?,
            switch_off_lift: f(cells[8])?,
            best_switch_step: u(cells[9])?,
            num_seeds: u(cells[10])?
                .ok_or_else(|| Error::Format(String::from("missing num_seeds")))?,
        })
    }
}

/// Evenly spaced switch-off candidates between 30% and 95% of training.
pub fn switch_off_candidates(steps: usize, count: usize) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    let lo = steps as f64 * 0.30;
    let hi = steps as f64 * 0.95;
    if count == 1 {
        return alloc::vec![libm::round(lo) as usize];
    }
    (0..count)
        .map(|i| libm::round(lo + (hi - lo) * i as f64 / (count - 1) as f64) as usize)
        .collect()
}
