//! Metrics over episode runs and Monte-Carlo aggregation.
//!
//! Per run: raw RMSE between the predicted and true safety fields, unsafe
//! visit counts, and safe-set classification counts against the moving
//! ground truth. Across runs: mean and (population) standard deviation per
//! metric, with RMSE normalized against a reference policy run-by-run.

use std::collections::HashMap;

use crate::agent::{EpisodeRun, EpisodeTrace};
use crate::env::GridWorld;

/// Micro-aggregated confusion counts; "positive" means safe.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassCounts {
    pub fn add(&mut self, other: &ClassCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// `(TP + TN) / (TP + TN + FP + FN)`; undefined on zero denominator.
    pub fn accuracy(&self) -> Option<f64> {
        let total = self.tp + self.tn + self.fp + self.fn_;
        (total > 0).then(|| (self.tp + self.tn) as f64 / total as f64)
    }

    /// `TP / (TP + FP)`; undefined on zero denominator.
    pub fn precision(&self) -> Option<f64> {
        let denom = self.tp + self.fp;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    /// `TP / (TP + FN)`; undefined on zero denominator.
    pub fn recall(&self) -> Option<f64> {
        let denom = self.tp + self.fn_;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }
}

/// Metrics of one episode.
#[derive(Clone, Debug)]
pub struct PerRunMetrics {
    pub rmse_raw: f64,
    pub unsafe_actions: u64,
    pub failure: bool,
    pub stuck_steps: u64,
    /// Present only for safety-aware policies.
    pub counts: Option<ClassCounts>,
}

/// Per-step RMSE of the predicted field against the true field, averaged
/// over steps.
pub fn compute_rmse(run: &EpisodeRun, w: &GridWorld) -> f64 {
    let n_states = w.n_states() as f64;
    let steps = run.trace.len();
    assert_eq!(run.predictions.len(), steps, "one prediction field per step");
    let mut total = 0.0;
    for (k, pred) in run.predictions.iter().enumerate() {
        let t = run.trace.steps[k].t;
        let truth = w.slice(t);
        let sq: f64 = pred
            .iter()
            .zip(truth)
            .map(|(p, g)| (p - g) * (p - g))
            .sum();
        total += (sq / n_states).sqrt();
    }
    total / steps as f64
}

/// Predicted-safe-space classification against the moving ground truth,
/// micro-aggregated over all steps: predicted positives are each snapshot's
/// certified set (states whose confidence lower bound clears the threshold),
/// true positives the states with `g(t, s) >= h`. `None` when the trace
/// carries no snapshots (safety-unaware policies).
pub fn compute_classification(trace: &EpisodeTrace, w: &GridWorld) -> Option<ClassCounts> {
    let mut counts = ClassCounts::default();
    let mut saw_snapshot = false;
    for rec in &trace.steps {
        let Some(snap) = &rec.snapshot else {
            return None;
        };
        saw_snapshot = true;
        for s in 0..w.n_states() {
            let predicted = snap.certified.contains(s);
            let actual = w.is_safe(rec.t, s);
            match (predicted, actual) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
        }
    }
    saw_snapshot.then_some(counts)
}

/// `(failures, unsafe_actions)`: traces with at least one unsafe visit, and
/// the total number of unsafe visits.
pub fn count_safety(traces: &[&EpisodeTrace]) -> (u64, u64) {
    let mut failures = 0;
    let mut unsafe_actions = 0;
    for trace in traces {
        let visits = trace.unsafe_visits();
        if visits > 0 {
            failures += 1;
        }
        unsafe_actions += visits;
    }
    (failures, unsafe_actions)
}

/// All metrics of one run.
pub fn run_metrics(run: &EpisodeRun, w: &GridWorld) -> PerRunMetrics {
    let unsafe_actions = run.trace.unsafe_visits();
    PerRunMetrics {
        rmse_raw: compute_rmse(run, w),
        unsafe_actions,
        failure: unsafe_actions > 0,
        stuck_steps: run.trace.stuck_steps(),
        counts: compute_classification(&run.trace, w),
    }
}

/// One policy row of the aggregate table.
#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub policy: String,
    /// Mean and sd of the per-run RMSE ratio against the reference policy;
    /// `None` when the reference policy was not part of the suite.
    pub rmse_norm: Option<(f64, f64)>,
    pub failures: u64,
    pub unsafe_actions: u64,
    pub accuracy: Option<(f64, f64)>,
    pub precision: Option<(f64, f64)>,
    pub recall: Option<(f64, f64)>,
}

#[derive(Debug)]
pub enum EvalError {
    MismatchedRunCounts { policy: String, got: usize, expected: usize },
}

impl std::fmt::Display for EvalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalError::MismatchedRunCounts { policy, got, expected } => write!(
                f,
                "policy {policy} has {got} runs, expected {expected}"
            ),
        }
    }
}

impl std::error::Error for EvalError {}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mean_sd_opt(values: &[Option<f64>]) -> Option<(f64, f64)> {
    let defined: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if defined.is_empty() {
        None
    } else {
        Some(mean_sd(&defined))
    }
}

/// Aggregate per-run metrics into one row per policy, in the given order.
/// RMSE is normalized per run index by the reference policy's run on the
/// same seed, then averaged; every policy must have the same run count.
pub fn aggregate_runs(
    per_policy: &[(String, Vec<PerRunMetrics>)],
    reference: &str,
) -> Result<Vec<SummaryRow>, EvalError> {
    let expected = per_policy
        .first()
        .map(|(_, runs)| runs.len())
        .unwrap_or(0);
    for (policy, runs) in per_policy {
        if runs.len() != expected {
            return Err(EvalError::MismatchedRunCounts {
                policy: policy.clone(),
                got: runs.len(),
                expected,
            });
        }
    }
    let reference_rmse: Option<Vec<f64>> = per_policy
        .iter()
        .find(|(name, _)| name == reference)
        .map(|(_, runs)| runs.iter().map(|r| r.rmse_raw).collect());

    let mut rows = Vec::with_capacity(per_policy.len());
    for (policy, runs) in per_policy {
        let rmse_norm = reference_rmse.as_ref().map(|refs| {
            let ratios: Vec<f64> = runs
                .iter()
                .zip(refs)
                .map(|(r, &r0)| r.rmse_raw / r0)
                .collect();
            mean_sd(&ratios)
        });
        let failures = runs.iter().filter(|r| r.failure).count() as u64;
        let unsafe_actions = runs.iter().map(|r| r.unsafe_actions).sum();
        let accuracy =
            mean_sd_opt(&runs.iter().map(|r| r.counts.and_then(|c| c.accuracy())).collect::<Vec<_>>());
        let precision =
            mean_sd_opt(&runs.iter().map(|r| r.counts.and_then(|c| c.precision())).collect::<Vec<_>>());
        let recall =
            mean_sd_opt(&runs.iter().map(|r| r.counts.and_then(|c| c.recall())).collect::<Vec<_>>());
        rows.push(SummaryRow {
            policy: policy.clone(),
            rmse_norm,
            failures,
            unsafe_actions,
            accuracy,
            precision,
            recall,
        });
    }
    Ok(rows)
}

/// Pool the classification counts of every run of one policy.
pub fn pooled_counts(runs: &[PerRunMetrics]) -> Option<ClassCounts> {
    let mut pooled = ClassCounts::default();
    let mut any = false;
    for r in runs {
        if let Some(c) = &r.counts {
            pooled.add(c);
            any = true;
        }
    }
    any.then_some(pooled)
}

/// Write the summary table as CSV in table order: policy, normalized RMSE,
/// failures/unsafe actions, accuracy, precision, recall. Undefined metrics
/// print as `-`.
pub fn write_summary_csv<W: std::io::Write>(
    rows: &[SummaryRow],
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "policy,rmse_norm_mean,rmse_norm_sd,failures,unsafe_actions,\
         accuracy_mean,accuracy_sd,precision_mean,precision_sd,recall_mean,recall_sd"
    )?;
    let fmt_pair = |v: &Option<(f64, f64)>| match v {
        Some((m, s)) => format!("{m:.4},{s:.4}"),
        None => "-,-".to_string(),
    };
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.policy,
            fmt_pair(&row.rmse_norm),
            row.failures,
            row.unsafe_actions,
            fmt_pair(&row.accuracy),
            fmt_pair(&row.precision),
            fmt_pair(&row.recall),
        )?;
    }
    Ok(())
}

/// Per-run metrics as CSV, one row per `(policy, run)`.
pub fn write_runs_csv<W: std::io::Write>(
    per_policy: &[(String, Vec<PerRunMetrics>)],
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "policy,run,rmse_raw,unsafe_actions,failure,stuck_steps,accuracy,precision,recall"
    )?;
    let fmt_opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.6}"),
        None => "-".to_string(),
    };
    for (policy, runs) in per_policy {
        for (idx, r) in runs.iter().enumerate() {
            writeln!(
                out,
                "{policy},{idx},{:.6},{},{},{},{},{},{}",
                r.rmse_raw,
                r.unsafe_actions,
                r.failure as u8,
                r.stuck_steps,
                fmt_opt(r.counts.and_then(|c| c.accuracy())),
                fmt_opt(r.counts.and_then(|c| c.precision())),
                fmt_opt(r.counts.and_then(|c| c.recall())),
            )?;
        }
    }
    Ok(())
}

/// Convenience: group flat `(policy, metrics)` pairs into the ordered
/// per-policy layout expected by [`aggregate_runs`].
pub fn group_by_policy(
    order: &[String],
    flat: Vec<(String, PerRunMetrics)>,
) -> Vec<(String, Vec<PerRunMetrics>)> {
    let mut map: HashMap<String, Vec<PerRunMetrics>> = HashMap::new();
    for (policy, metrics) in flat {
        map.entry(policy).or_default().push(metrics);
    }
    order
        .iter()
        .filter_map(|p| map.remove(p).map(|runs| (p.clone(), runs)))
        .collect()
}
