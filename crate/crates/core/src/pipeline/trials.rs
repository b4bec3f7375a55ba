//! Multi-seed trials and paired comparisons between two configurations.

use std::borrow::Borrow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, train, TrainConfig};
use crate::corpus::{Dataset, MeanStd};
use crate::encoder::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::RankingMetrics;

/// Everything one trial trains and evaluates on.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    pub table: EmbeddingTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRun {
    pub trial: usize,
    pub seed: u64,
    pub metrics: RankingMetrics,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub config: TrainConfig,
    pub runs: Vec<TrialRun>,
    pub accuracy: MeanStd,
    pub recall_at_k: MeanStd,
    pub mrr: MeanStd,
}

impl TrialReport {
    fn from_runs(config: TrainConfig, runs: Vec<TrialRun>) -> Result<Self> {
        let stat = |f: fn(&RankingMetrics) -> f64| {
            let v: Vec<f64> = runs.iter().map(|r| f(&r.metrics)).collect();
            MeanStd::of(&v).ok_or_else(|| Error::InvalidConfig("no trials".into()))
        };
        Ok(TrialReport {
            accuracy: stat(|m| m.accuracy)?,
            recall_at_k: stat(|m| m.recall_at_k)?,
            mrr: stat(|m| m.mrr)?,
            config,
            runs,
        })
    }

    pub fn values(&self, metric: fn(&RankingMetrics) -> f64) -> Vec<f64> {
        self.runs.iter().map(|r| metric(&r.metrics)).collect()
    }
}

/// Per-seed differences `b - a` for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub differences: Vec<f64>,
    pub mean_difference: f64,
    /// `mean / (sd / sqrt(n))` with the sample standard deviation; `None` for
    /// fewer than two trials or zero spread.
    pub t_statistic: Option<f64>,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl MetricComparison {
    pub fn from_pairs(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::LengthMismatch(format!("{} vs {} paired values", a.len(), b.len())));
        }
        let differences: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
        let n = differences.len() as f64;
        let mean_difference = differences.iter().sum::<f64>() / n;
        let t_statistic = if differences.len() < 2 {
            None
        } else {
            let var = differences.iter().map(|d| (d - mean_difference).powi(2)).sum::<f64>() / (n - 1.0);
            (var > 0.0).then(|| mean_difference / (var.sqrt() / n.sqrt()))
        };
        Ok(MetricComparison {
            wins: differences.iter().filter(|&&d| d > 0.0).count(),
            losses: differences.iter().filter(|&&d| d < 0.0).count(),
            ties: differences.iter().filter(|&&d| d == 0.0).count(),
            differences,
            mean_difference,
            t_statistic,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub a: TrialReport,
    pub b: TrialReport,
    pub accuracy: MetricComparison,
    pub recall_at_k: MetricComparison,
    pub mrr: MetricComparison,
}

/// Compares two reports trial by trial; both must use the same seeds.
pub fn paired_comparison(a: TrialReport, b: TrialReport) -> Result<PairedReport> {
    let seeds = |r: &TrialReport| r.runs.iter().map(|t| t.seed).collect::<Vec<_>>();
    if seeds(&a) != seeds(&b) {
        return Err(Error::InvalidConfig("paired trials must share their seeds".into()));
    }
    let cmp = |f: fn(&RankingMetrics) -> f64| MetricComparison::from_pairs(&a.values(f), &b.values(f));
    Ok(PairedReport {
        accuracy: cmp(|m| m.accuracy)?,
        recall_at_k: cmp(|m| m.recall_at_k)?,
        mrr: cmp(|m| m.mrr)?,
        a,
        b,
    })
}

/// Runs `cfg.trial_count` trials with seeds `cfg.seed + i`; `data(seed)` supplies
/// each trial's corpus. Trials run in parallel and are collected by index.
pub fn run_trials_with<D, F>(cfg: &TrainConfig, data: F) -> Result<TrialReport>
where
    D: Borrow<TrialData>,
    F: Fn(u64) -> Result<D> + Sync,
{
    if cfg.trial_count == 0 {
        return Err(Error::InvalidConfig("trial_count must be >= 1".into()));
    }
    cfg.validate()?;
    let runs = (0..cfg.trial_count)
        .into_par_iter()
        .map(|trial| {
            let seed = cfg.seed.wrapping_add(trial as u64);
            let d = data(seed)?;
            let d = d.borrow();
            let trial_cfg = TrainConfig { seed, ..cfg.clone() };
            let model = train(&d.train, &d.valid, &d.table, &trial_cfg)?;
            let report = evaluate(&model, &d.test, cfg.eval_k)?;
            Ok(TrialRun {
                trial,
                seed,
                metrics: report.metrics,
                best_epoch: model.best_epoch,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TrialReport::from_runs(cfg.clone(), runs)
}

/// Trials over one fixed corpus.
pub fn run_trials(cfg: &TrainConfig, data: &TrialData) -> Result<TrialReport> {
    run_trials_with(cfg, |_| Ok(data))
}
