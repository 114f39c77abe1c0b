//! Reporting: re-reads a results directory and emits a scatter TSV
//! (affinity vs. diversity vs. test accuracy), per-policy switch-off curves,
//! and a plain-text table sorted by test accuracy.

use crate::error::{CliError, Result};
use crate::harness::{policy_slug, RunSummary};
use augmetrics_core::metrics::MetricsRecord;
use std::path::Path;

pub fn read_results_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == MetricsRecord::csv_header() => {}
        _ => {
            return Err(CliError::Config(format!(
                "{}: line 1: missing or wrong header",
                path.display()
            )))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let rec = MetricsRecord::parse_csv_row(line).map_err(|e| {
            CliError::Config(format!("{}: line {}: {e}", path.display(), i + 1))
        })?;
        records.push(rec);
    }
    Ok(records)
}

fn fmt_opt_f(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

fn fmt_opt_u(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

/// Scatter TSV with one row per policy: affinity, diversity (final training
/// loss), and test accuracy. Rows missing any of the three are skipped.
pub fn scatter_tsv(records: &[MetricsRecord]) -> String {
    let mut text = String::from("policy_label\taffinity\tdiversity_loss\ttest_acc\n");
    for r in records {
        if let (Some(a), Some(d), Some(t)) = (r.affinity, r.diversity_loss, r.test_acc) {
            text.push_str(&format!("{}\t{a}\t{d}\t{t}\n", r.policy_label));
        }
    }
    text
}

/// Per-policy switch-off curve: mean validation/test accuracy across seeds
/// at each candidate step, read back from the per-run summaries.
pub fn switch_curve_tsv(out_dir: &Path, label: &str) -> Result<String> {
    let policy_dir = out_dir.join("runs").join(policy_slug(label));
    let mut summaries: Vec<RunSummary> = Vec::new();
    for entry in std::fs::read_dir(&policy_dir)
        .map_err(|e| CliError::Config(format!("no runs for `{label}`: {e}")))?
    {
        let run_json = entry?.path().join("run.json");
        if run_json.exists() {
            let text = std::fs::read_to_string(&run_json)?;
            summaries.push(serde_json::from_str(&text)?);
        }
    }
    if summaries.is_empty() || summaries.iter().all(|s| s.switch.is_empty()) {
        return Err(CliError::Config(format!(
            "no switch-off data recorded for `{label}`"
        )));
    }
    summaries.sort_by_key(|s| s.seed);
    let steps: Vec<usize> = summaries
        .iter()
        .find(|s| !s.switch.is_empty())
        .map(|s| s.switch.iter().map(|p| p.step).collect())
        .unwrap_or_default();
    let mut text = String::from("switch_step\tmean_val_acc\tmean_test_acc\n");
    for &step in &steps {
        let mut vals = Vec::new();
        let mut tests = Vec::new();
        for s in &summaries {
            if let Some(p) = s.switch.iter().find(|p| p.step == step) {
                vals.push(p.val_acc);
                tests.push(p.test_acc);
            }
        }
        if vals.is_empty() {
            continue;
        }
        let mv = vals.iter().sum::<f64>() / vals.len() as f64;
        let mt = tests.iter().sum::<f64>() / tests.len() as f64;
        text.push_str(&format!("{step}\t{mv}\t{mt}\n"));
    }
    Ok(text)
}

/// Fixed-width text table, sorted by test accuracy descending (rows without
/// a test accuracy sink to the bottom, keeping their relative order).
pub fn results_table(records: &[MetricsRecord]) -> String {
    let mut rows: Vec<&MetricsRecord> = records.iter().collect();
    rows.sort_by(|a, b| {
        let ka = a.test_acc.unwrap_or(f64::NEG_INFINITY);
        let kb = b.test_acc.unwrap_or(f64::NEG_INFINITY);
        kb.partial_cmp(&ka).expect("finite sort keys")
    });
    let width = rows
        .iter()
        .map(|r| r.policy_label.len())
        .chain(std::iter::once("policy".len()))
        .max()
        .unwrap_or(6);
    let mut text = format!(
        "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>8}  {:>9}  {:>9}  {:>6}\n",
        "policy",
        "affinity",
        "div_loss",
        "div_ent",
        "test_acc",
        "steps",
        "lift",
        "best_sw",
        "seeds",
    );
    for r in rows {
        text.push_str(&format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>8}  {:>9}  {:>9}  {:>6}\n",
            r.policy_label,
            fmt_opt_f(r.affinity),
            fmt_opt_f(r.diversity_loss),
            fmt_opt_f(r.diversity_entropy),
            fmt_opt_f(r.test_acc),
            fmt_opt_u(r.steps_to_threshold),
            fmt_opt_f(r.switch_off_lift),
            fmt_opt_u(r.best_switch_step),
            r.num_seeds,
        ));
    }
    text
}

/// Full report over a results directory: writes `scatter.tsv` and (where
/// recorded) `switch_<slug>.tsv`, and returns the text table.
pub fn write_report(out_dir: &Path) -> Result<String> {
    let records = read_results_csv(&out_dir.join("results.csv"))?;
    std::fs::write(out_dir.join("scatter.tsv"), scatter_tsv(&records))?;
    for r in &records {
        if r.switch_off_lift.is_none() {
            continue;
        }
        let curve = switch_curve_tsv(out_dir, &r.policy_label)?;
        let name = format!("switch_{}.tsv", policy_slug(&r.policy_label));
        std::fs::write(out_dir.join(name), curve)?;
    }
    Ok(results_table(&records))
}
