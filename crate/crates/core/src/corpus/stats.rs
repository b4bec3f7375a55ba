use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Dataset, Function, SplitTag};
use crate::error::{Error, Result};

/// One additional-annotation judgment: how many of `n_raters` annotators judged
/// the (request, category) pair thoughtful.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub request_id: String,
    pub category: usize,
    pub votes: u32,
}

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionStats {
    /// `None` for the overall row.
    pub function: Option<Function>,
    pub requests: usize,
    pub token_length: Option<MeanStd>,
    /// |gold| - 1, over requests that carry gold annotation.
    pub added_categories: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteBucket {
    pub votes: u32,
    pub count: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteSummary {
    pub n_raters: u32,
    pub histogram: Vec<VoteBucket>,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub split: SplitTag,
    pub functions: Vec<FunctionStats>,
    pub overall: FunctionStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub votes: Option<VoteSummary>,
}

fn summarize(d: &Dataset, function: Option<Function>) -> FunctionStats {
    let members: Vec<_> = d
        .requests
        .iter()
        .filter(|r| match function {
            Some(f) => d
                .categories
                .get(r.given_category)
                .is_some_and(|c| c.function == f),
            None => true,
        })
        .collect();
    let lengths: Vec<f64> = members.iter().map(|r| r.tokens.len() as f64).collect();
    let added: Vec<f64> = members
        .iter()
        .filter_map(|r| r.gold_categories.as_ref())
        .map(|g| g.len().saturating_sub(1) as f64)
        .collect();
    FunctionStats {
        function,
        requests: members.len(),
        token_length: MeanStd::of(&lengths),
        added_categories: MeanStd::of(&added),
    }
}

pub fn corpus_stats(d: &Dataset) -> StatsReport {
    StatsReport {
        split: d.split,
        functions: Function::ALL.iter().map(|&f| summarize(d, Some(f))).collect(),
        overall: summarize(d, None),
        votes: None,
    }
}

/// Histogram of vote counts (0..=n_raters) plus the binary Fleiss' kappa.
pub fn vote_summary(votes: &[VoteRecord], n_raters: u32) -> Result<VoteSummary> {
    let kappa = fleiss_kappa(votes, n_raters, 2)?;
    let mut counts = vec![0usize; n_raters as usize + 1];
    for v in votes {
        counts[v.votes as usize] += 1;
    }
    let total = votes.len().max(1) as f64;
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(votes, count)| VoteBucket {
            votes: votes as u32,
            count,
            ratio: count as f64 / total,
        })
        .collect();
    Ok(VoteSummary {
        n_raters,
        histogram,
        kappa,
    })
}

/// Fleiss' kappa for binary "thoughtful / not thoughtful" judgments.
///
/// Each record becomes the two-class count row `[votes, n_raters - votes]`.
/// Only `n_classes == 2` is meaningful for vote records.
pub fn fleiss_kappa(votes: &[VoteRecord], n_raters: u32, n_classes: usize) -> Result<f64> {
    if n_classes != 2 {
        return Err(Error::InvalidConfig(format!(
            "vote records encode binary judgments; n_classes must be 2, got {n_classes}"
        )));
    }
    let rows = votes
        .iter()
        .map(|v| {
            if v.votes > n_raters {
                Err(Error::InvalidConfig(format!(
                    "record ({}, {}) has {} votes out of {n_raters} raters",
                    v.request_id, v.category, v.votes
                )))
            } else {
                Ok(vec![v.votes, n_raters - v.votes])
            }
        })
        .collect::<Result<Vec<_>>>()?;
    fleiss_kappa_counts(&rows, n_raters)
}

/// Fleiss' kappa over an items x classes count table where every row sums to `n_raters`.
///
/// When expected agreement is 1 (every rating falls in one class) the statistic
/// is 0/0; it is defined as 1.0 here.
pub fn fleiss_kappa_counts(rows: &[Vec<u32>], n_raters: u32) -> Result<f64> {
    if n_raters < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 raters, got {n_raters}")));
    }
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no items to compute kappa over".into()));
    }
    let n_classes = rows[0].len();
    let n = f64::from(n_raters);
    let mut class_totals = vec![0.0f64; n_classes];
    let mut agreement_sum = 0.0;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n_classes || row.iter().sum::<u32>() != n_raters {
            return Err(Error::InvalidConfig(format!(
                "item {i} counts {row:?} do not sum to {n_raters} over {n_classes} classes"
            )));
        }
        let sq: f64 = row.iter().map(|&c| f64::from(c).powi(2)).sum();
        agreement_sum += (sq - n) / (n * (n - 1.0));
        for (t, &c) in class_totals.iter_mut().zip(row) {
            *t += f64::from(c);
        }
    }
    let items = rows.len() as f64;
    let p_bar = agreement_sum / items;
    let p_e: f64 = class_totals
        .iter()
        .map(|t| (t / (items * n)).powi(2))
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

fn fmt_mean_std(m: Option<MeanStd>) -> String {
    m.map_or_else(|| "-".to_owned(), |m| format!("{:.2} (±{:.2})", m.mean, m.std))
}

impl StatsReport {
    pub fn with_votes(mut self, votes: VoteSummary) -> Self {
        self.votes = Some(votes);
        self
    }

    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>18} {:>10} {:>18}",
            "Function", "Ave. length", "# requests", "# added categories"
        );
        let rows = self.functions.iter().chain(std::iter::once(&self.overall));
        for f in rows {
            let name = f.function.map_or("all", Function::as_str);
            let _ = writeln!(
                out,
                "{:<20} {:>18} {:>10} {:>18}",
                name,
                fmt_mean_std(f.token_length),
                f.requests,
                fmt_mean_std(f.added_categories)
            );
        }
        if let Some(v) = &self.votes {
            let _ = writeln!(out, "\n{:<8} {:>18}", "# votes", "pairs (ratio %)");
            for b in &v.histogram {
                let _ = writeln!(out, "{:<8} {:>18}", b.votes, format!("{} ({:.2})", b.count, 100.0 * b.ratio));
            }
            let _ = writeln!(out, "Fleiss' kappa: {:.4}", v.kappa);
        }
        out
    }
}
