//! Experiment orchestration: clean baselines, per-policy runs, switch-off
//! sweeps, static/dynamic comparisons, result aggregation, and caching.
//!
//! Caching is keyed on the config hash recorded inside each per-run summary
//! file; a re-run with an unchanged config loads summaries instead of
//! retraining, which also makes interrupted sweeps resumable.

use crate::ckpt::{read_checkpoint, write_checkpoint};
use crate::config::{ExperimentConfig, Task, TOOL_VERSION};
use crate::datasets::{load_datasets, SplitDatasets};
use crate::error::{CliError, Result};
use augmetrics_core::data::LabeledDataset;
use augmetrics_core::metrics::{
    diversity_entropy, paired_sem, switch_off_candidates, switch_off_lift, MetricsRecord,
    RunScores,
};
use augmetrics_core::model::ModelSpec;
use augmetrics_core::rng::derive_seed;
use augmetrics_core::trainer::{
    accuracy, dataset_mean_log_likelihood, resume_without_augmentation, train, AugMode,
    Checkpoint, TrainRun,
};
use augmetrics_core::transforms::{augment_validation, Policy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Filesystem-safe directory name for a policy, disambiguated by a short
/// content hash so distinct labels never collide.
pub fn policy_slug(label: &str) -> String {
    let mut cleaned: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    cleaned.truncate(48);
    let h = derive_seed(0, label) as u32;
    format!("{cleaned}-{h:08x}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_log_csv(path: &Path, run: &TrainRun) -> Result<()> {
    let mut text = String::from("step,lr,train_loss,train_acc,val_acc\n");
    for e in &run.log {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            e.step, e.lr, e.train_loss, e.train_acc, e.val_acc
        ));
    }
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SwitchPoint {
    pub step: usize,
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Everything recorded about one `(policy, seed)` cell; the clean baseline
/// uses the same shape with the Identity policy.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub config_hash: u64,
    pub policy: String,
    pub seed: u64,
    pub trained: bool,
    pub final_train_loss: Option<f64>,
    pub final_val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub steps_to_threshold: Option<usize>,
    /// Clean-model accuracies on the clean and augmented validation sets.
    pub acc_clean_val: Option<f64>,
    pub acc_aug_val: Option<f64>,
    /// Mean log-sum-exp of the clean model's logits (density proxy).
    pub mll_clean_val: Option<f64>,
    pub mll_aug_val: Option<f64>,
    pub static_final_train_loss: Option<f64>,
    #[serde(default)]
    pub switch: Vec<SwitchPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: u64,
    pub tool_version: String,
    pub total_jobs: usize,
    pub cached_jobs: usize,
    pub runs: Vec<String>,
}

pub struct ExperimentOutcome {
    pub results_path: Option<PathBuf>,
    pub manifest: Manifest,
    pub records: Vec<MetricsRecord>,
}

fn run_dir(out: &Path, label: &str, seed: u64) -> PathBuf {
    out.join("runs").join(policy_slug(label)).join(seed.to_string())
}

fn load_cached_summary(path: &Path, config_hash: u64) -> Option<RunSummary> {
    let text = std::fs::read_to_string(path).ok()?;
    let summary: RunSummary = serde_json::from_str(&text).ok()?;
    (summary.config_hash == config_hash).then_some(summary)
}

fn save_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    write_atomic(path, text.as_bytes())
}

/// Prepares a policy for this dataset: validates dimensions and routes the
/// training-set channel means into the Cutout fill.
fn prepared_policy(cfg: &ExperimentConfig, label: &str, train: &LabeledDataset) -> Result<Policy> {
    let mut policy = Policy::parse(label)?;
    let (h, w, _) = cfg.input_shape();
    policy.validate_for(h, w)?;
    policy.set_cutout_fill(&train.channel_means());
    Ok(policy)
}

struct JobContext<'a> {
    cfg: &'a ExperimentConfig,
    spec: ModelSpec,
    ds: &'a SplitDatasets,
    out: &'a Path,
    config_hash: u64,
    candidates: Vec<usize>,
}

impl JobContext<'_> {
    fn wants(&self, task: Task) -> bool {
        self.cfg.tasks.contains(&task)
    }

    fn needs_training(&self) -> bool {
        self.wants(Task::Diversity)
            || self.wants(Task::Switchoff)
            || self.wants(Task::StaticCompare)
    }

    fn clean_ckpt_path(&self, seed: u64) -> PathBuf {
        run_dir(self.out, "Identity", seed).join("final.ckpt")
    }

    /// Trains (or loads) the clean baseline for one seed. The final params
    /// are persisted as a checkpoint so affinity jobs can reuse them.
    fn ensure_clean(&self, seed: u64) -> Result<RunSummary> {
        let dir = run_dir(self.out, "Identity", seed);
        std::fs::create_dir_all(&dir)?;
        let summary_path = dir.join("run.json");
        if let Some(s) = load_cached_summary(&summary_path, self.config_hash) {
            if self.clean_ckpt_path(seed).exists() {
                return Ok(s);
            }
        }
        let tc = self.cfg.train_config(Policy::identity(), seed);
        let run = train(&self.spec, &self.ds.train, &self.ds.val, &tc)?;
        let test_acc = accuracy(&self.spec, &run.final_params, &self.ds.test)?;
        let clean_val = accuracy(&self.spec, &run.final_params, &self.ds.val)?;
        let mll = dataset_mean_log_likelihood(&self.spec, &run.final_params, &self.ds.val)?;
        write_log_csv(&dir.join("log.csv"), &run)?;
        write_checkpoint(
            &self.clean_ckpt_path(seed),
            &self.spec,
            seed,
            &Checkpoint {
                step: tc.steps,
                params: run.final_params.clone(),
                velocity: run.final_velocity.clone(),
            },
        )?;
        let summary = RunSummary {
            config_hash: self.config_hash,
            policy: "Identity".into(),
            seed,
            trained: true,
            final_train_loss: Some(run.final_train_loss),
            final_val_acc: Some(run.final_val_acc),
            test_acc: Some(test_acc),
            steps_to_threshold: run.steps_to_threshold,
            acc_clean_val: Some(clean_val),
            acc_aug_val: Some(clean_val),
            mll_clean_val: Some(mll),
            mll_aug_val: Some(mll),
            static_final_train_loss: None,
            switch: Vec::new(),
        };
        save_summary(&summary_path, &summary)?;
        Ok(summary)
    }

    /// Runs everything requested for one `(policy, seed)` cell.
    fn run_policy_seed(&self, label: &str, seed: u64) -> Result<RunSummary> {
        let dir = run_dir(self.out, label, seed);
        std::fs::create_dir_all(&dir)?;
        let summary_path = dir.join("run.json");
        if let Some(s) = load_cached_summary(&summary_path, self.config_hash) {
            return Ok(s);
        }
        let policy = prepared_policy(self.cfg, label, &self.ds.train)?;
        if policy.is_identity() {
            // The clean baseline doubles as the Identity row.
            let clean = self.ensure_clean(seed)?;
            save_summary(&summary_path, &clean)?;
            return Ok(clean);
        }

        let mut summary = RunSummary {
            config_hash: self.config_hash,
            policy: label.to_string(),
            seed,
            trained: false,
            final_train_loss: None,
            final_val_acc: None,
            test_acc: None,
            steps_to_threshold: None,
            acc_clean_val: None,
            acc_aug_val: None,
            mll_clean_val: None,
            mll_aug_val: None,
            static_final_train_loss: None,
            switch: Vec::new(),
        };

        if self.wants(Task::Affinity) {
            let (_, clean_ckpt) = read_checkpoint(&self.clean_ckpt_path(seed), &self.spec)?;
            let aug_val = augment_validation(&policy, &self.ds.val, seed);
            summary.acc_clean_val =
                Some(accuracy(&self.spec, &clean_ckpt.params, &self.ds.val)?);
            summary.acc_aug_val = Some(accuracy(&self.spec, &clean_ckpt.params, &aug_val)?);
            summary.mll_clean_val = Some(dataset_mean_log_likelihood(
                &self.spec,
                &clean_ckpt.params,
                &self.ds.val,
            )?);
            summary.mll_aug_val = Some(dataset_mean_log_likelihood(
                &self.spec,
                &clean_ckpt.params,
                &aug_val,
            )?);
        }

        if self.needs_training() {
            let mut tc = self.cfg.train_config(policy.clone(), seed);
            if self.wants(Task::Switchoff) {
                tc.checkpoint_steps = self.candidates.clone();
            }
            let run = train(&self.spec, &self.ds.train, &self.ds.val, &tc)?;
            summary.trained = true;
            summary.final_train_loss = Some(run.final_train_loss);
            summary.final_val_acc = Some(run.final_val_acc);
            summary.test_acc = Some(accuracy(&self.spec, &run.final_params, &self.ds.test)?);
            summary.steps_to_threshold = run.steps_to_threshold;
            write_log_csv(&dir.join("log.csv"), &run)?;

            if self.wants(Task::Switchoff) {
                for &step in &self.candidates {
                    let resumed =
                        resume_without_augmentation(&self.spec, &self.ds.train, &self.ds.val, &run, step)?;
                    summary.switch.push(SwitchPoint {
                        step,
                        val_acc: resumed.final_val_acc,
                        test_acc: accuracy(&self.spec, &resumed.final_params, &self.ds.test)?,
                    });
                }
            }

            if self.wants(Task::StaticCompare) {
                let mut sc = self.cfg.train_config(policy.clone(), seed);
                sc.mode = AugMode::Static;
                let static_run = train(&self.spec, &self.ds.train, &self.ds.val, &sc)?;
                summary.static_final_train_loss = Some(static_run.final_train_loss);
            }
        }

        save_summary(&summary_path, &summary)?;
        Ok(summary)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mean_sem(xs: &[f64]) -> (f64, Option<f64>) {
    let m = mean(xs);
    if xs.len() < 2 {
        return (m, None);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, Some(var.sqrt() / (xs.len() as f64).sqrt()))
}

fn aggregate_policy(
    ctx: &JobContext<'_>,
    label: &str,
    summaries: &[RunSummary],
) -> Result<MetricsRecord> {
    let mut rec = MetricsRecord::blank(label.to_string(), summaries.len());

    if ctx.wants(Task::Affinity) {
        let pairs: Vec<(f64, f64)> = summaries
            .iter()
            .filter_map(|s| Some((s.acc_aug_val?, s.acc_clean_val?)))
            .collect();
        if pairs.len() == summaries.len() {
            if pairs.len() >= 2 {
                let (m, sem) = paired_sem(&pairs)?;
                rec.affinity = Some(m);
                rec.affinity_sem = Some(sem);
            } else {
                rec.affinity = Some(pairs[0].0 - pairs[0].1);
            }
        }
    }

    if ctx.wants(Task::Entropy) {
        let policy = Policy::parse(label)?;
        let (h, w, _) = ctx.cfg.input_shape();
        rec.diversity_entropy = diversity_entropy(&policy, h, w).ok();
    }

    let trained: Vec<&RunSummary> = summaries.iter().filter(|s| s.trained).collect();
    if !trained.is_empty() && trained.len() == summaries.len() {
        if ctx.wants(Task::Diversity) {
            let losses: Vec<f64> = trained.iter().filter_map(|s| s.final_train_loss).collect();
            if losses.len() == trained.len() {
                rec.diversity_loss = Some(mean(&losses));
            }
            let steps: Vec<usize> = trained
                .iter()
                .filter_map(|s| s.steps_to_threshold)
                .collect();
            // Blank unless every seed reached the threshold.
            if steps.len() == trained.len() {
                rec.steps_to_threshold =
                    Some((steps.iter().sum::<usize>() as f64 / steps.len() as f64).round() as usize);
            }
        }
        let accs: Vec<f64> = trained.iter().filter_map(|s| s.test_acc).collect();
        if accs.len() == trained.len() {
            let (m, sem) = mean_sem(&accs);
            rec.test_acc = Some(m);
            rec.test_acc_sem = sem;
        }
        if ctx.wants(Task::Switchoff) && trained.iter().all(|s| !s.switch.is_empty()) {
            let base: Vec<RunScores> = trained
                .iter()
                .map(|s| RunScores {
                    val_acc: s.final_val_acc.unwrap_or(f64::NAN),
                    test_acc: s.test_acc.unwrap_or(f64::NAN),
                })
                .collect();
            let mut by_step = std::collections::BTreeMap::new();
            for &step in &ctx.candidates {
                let scores: Vec<RunScores> = trained
                    .iter()
                    .map(|s| {
                        s.switch
                            .iter()
                            .find(|p| p.step == step)
                            .map(|p| RunScores {
                                val_acc: p.val_acc,
                                test_acc: p.test_acc,
                            })
                            .ok_or_else(|| {
                                CliError::Runtime(format!("missing switch point {step}"))
                            })
                    })
                    .collect::<Result<_>>()?;
                by_step.insert(step, scores);
            }
            let (lift, best) = switch_off_lift(&base, &by_step)?;
            rec.switch_off_lift = Some(lift);
            rec.best_switch_step = Some(best);
        }
    }
    Ok(rec)
}

fn write_static_compare(
    out: &Path,
    cfg: &ExperimentConfig,
    all: &[(String, Vec<RunSummary>)],
) -> Result<()> {
    let mut text =
        String::from("policy_label,diversity_dynamic,diversity_static,paired_diff,paired_sem,num_seeds\n");
    for (label, summaries) in all {
        let pairs: Vec<(f64, f64)> = summaries
            .iter()
            .filter_map(|s| Some((s.final_train_loss?, s.static_final_train_loss?)))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let dynamic = mean(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let stat = mean(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        let (diff, sem) = if pairs.len() >= 2 {
            let (m, s) = paired_sem(&pairs)?;
            (m, format!("{s}"))
        } else {
            (pairs[0].0 - pairs[0].1, String::new())
        };
        text.push_str(&format!(
            "{label},{dynamic},{stat},{diff},{sem},{}\n",
            cfg.seeds.len()
        ));
    }
    write_atomic(&out.join("static_compare.csv"), text.as_bytes())
}

/// Runs the configured experiment into `out`, parallelized over a pool of
/// `jobs` workers (0 = rayon default). Returns the aggregated records.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let config_hash = cfg.hash();
    let toy_only = cfg.tasks == vec![Task::Toygauss];

    let mut records = Vec::new();
    let mut run_keys = Vec::new();
    let mut total_jobs = 0usize;
    let mut cached_jobs = 0usize;
    let mut results_path = None;

    if !toy_only {
        let ds = load_datasets(cfg)?;
        let ctx = JobContext {
            cfg,
            spec: cfg.model_spec(),
            ds: &ds,
            out,
            config_hash,
            candidates: switch_off_candidates(cfg.train.steps, cfg.switch_candidates),
        };

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;

        // Phase A: clean baselines, one per seed (cached individually).
        let was_cached = |label: &str, seed: u64| {
            load_cached_summary(&run_dir(out, label, seed).join("run.json"), config_hash).is_some()
        };
        let clean_cached: Vec<bool> = cfg.seeds.iter().map(|&s| was_cached("Identity", s)).collect();
        // Snapshot cell cache state before phase A: Identity-policy cells are
        // served by the clean baselines and must not count as cache hits on a
        // fresh run.
        let mut cells: Vec<(String, u64)> = Vec::new();
        for label in &cfg.policies {
            for &seed in &cfg.seeds {
                cells.push((label.clone(), seed));
            }
        }
        let cell_cached: Vec<bool> = cells
            .iter()
            .map(|(label, seed)| was_cached(label, *seed))
            .collect();
        pool.install(|| {
            cfg.seeds
                .par_iter()
                .map(|&seed| ctx.ensure_clean(seed).map(|_| ()))
                .collect::<Result<Vec<()>>>()
        })?;
        total_jobs += cfg.seeds.len();
        cached_jobs += clean_cached.iter().filter(|&&c| c).count();
        for &seed in &cfg.seeds {
            run_keys.push(format!("Identity/{seed}"));
        }

        // Phase B: policy x seed cells.
        let summaries: Vec<RunSummary> = pool.install(|| {
            cells
                .par_iter()
                .map(|(label, seed)| ctx.run_policy_seed(label, *seed))
                .collect::<Result<Vec<_>>>()
        })?;
        total_jobs += cells.len();
        cached_jobs += cell_cached.iter().filter(|&&c| c).count();

        let mut by_policy: Vec<(String, Vec<RunSummary>)> = Vec::new();
        for label in &cfg.policies {
            let group: Vec<RunSummary> = summaries
                .iter()
                .zip(&cells)
                .filter(|(_, (l, _))| l == label)
                .map(|(s, _)| s.clone())
                .collect();
            run_keys.extend(group.iter().map(|s| format!("{label}/{}", s.seed)));
            by_policy.push((label.clone(), group));
        }

        for (label, group) in &by_policy {
            records.push(aggregate_policy(&ctx, label, group)?);
        }

        let mut csv = String::from(MetricsRecord::csv_header());
        csv.push('\n');
        for rec in &records {
            csv.push_str(&rec.to_csv_row());
            csv.push('\n');
        }
        let path = out.join("results.csv");
        write_atomic(&path, csv.as_bytes())?;
        results_path = Some(path);

        if cfg.tasks.contains(&Task::StaticCompare) {
            write_static_compare(out, cfg, &by_policy)?;
        }
    }

    if cfg.tasks.contains(&Task::Toygauss) {
        let toy = cfg.toy.clone().unwrap_or_default();
        crate::toy::emit_toy(&toy, cfg.dataset.seed, out)?;
        run_keys.push("toygauss".into());
        total_jobs += 1;
    }

    let manifest = Manifest {
        config_hash,
        tool_version: TOOL_VERSION.to_string(),
        total_jobs,
        cached_jobs,
        runs: run_keys,
    };
    write_atomic(
        &out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(ExperimentOutcome {
        results_path,
        manifest,
        records,
    })
}
