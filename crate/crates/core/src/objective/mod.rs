//! Ranked ramp-loss objectives for PN and PU training, their subgradients and Adam.

mod adam;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{loss_gradients, pn_loss, pu_loss, Gradients, LossMode};

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    /// Ramp loss clipping point `m`; the loss saturates at `1 - m`.
    pub margin: f64,
    /// Weight of the per-category sign term.
    pub kappa: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            margin: -0.8,
            kappa: 5.0,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin.is_nan() || self.margin >= 1.0 {
            return Err(Error::InvalidConfig(format!("margin must be < 1, got {}", self.margin)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!("kappa must be positive, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// One weight vector per category, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dim: usize,
    pub category_count: usize,
    pub weights: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(category_count: usize, dim: usize) -> Self {
        ModelParams {
            dim,
            category_count,
            weights: vec![0.0; category_count * dim],
        }
    }

    /// Gaussian initialisation with standard deviation `scale`.
    pub fn random(category_count: usize, dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let dist = Normal::new(0.0, scale)
            .map_err(|e| Error::InvalidConfig(format!("initialisation scale {scale}: {e}")))?;
        Ok(ModelParams {
            dim,
            category_count,
            weights: (0..category_count * dim).map(|_| dist.sample(rng)).collect(),
        })
    }

    pub fn row(&self, category: usize) -> &[f64] {
        &self.weights[category * self.dim..(category + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.category_count < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 categories, got {}",
                self.category_count
            )));
        }
        if self.weights.len() != self.category_count * self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.category_count * self.dim,
                actual: self.weights.len(),
            });
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model weights".into()));
        }
        Ok(())
    }
}

/// Positive and negative categories of one request with their weights in [0, 1].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub positives: BTreeMap<usize, f64>,
    pub negatives: BTreeMap<usize, f64>,
}

/// Per-request signed weighted labels. The sign of a label is its membership
/// (positive or negative); stored weights are magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedLabelMatrix {
    pub category_count: usize,
    pub rows: Vec<LabelRow>,
}

impl WeightedLabelMatrix {
    /// Conventional labels: each request's positive set with weight 1, every
    /// other category negative with weight 1.
    pub fn from_positive_sets(positives: &[BTreeSet<usize>], category_count: usize) -> Self {
        let rows = positives
            .iter()
            .map(|p| LabelRow {
                positives: p.iter().map(|&j| (j, 1.0)).collect(),
                negatives: (0..category_count)
                    .filter(|j| !p.contains(j))
                    .map(|j| (j, 1.0))
                    .collect(),
            })
            .collect();
        WeightedLabelMatrix {
            category_count,
            rows,
        }
    }

    pub fn from_given(given: &[usize], category_count: usize) -> Self {
        let sets: Vec<BTreeSet<usize>> = given.iter().map(|&g| BTreeSet::from([g])).collect();
        Self::from_positive_sets(&sets, category_count)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Checks disjointness, full coverage of the categories and weight ranges.
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            for (&j, &w) in row.positives.iter().chain(&row.negatives) {
                if j >= self.category_count {
                    return Err(Error::InvalidLabels {
                        request: i,
                        message: format!("category {j} out of range"),
                    });
                }
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::WeightOutOfRange {
                        request: i,
                        category: j,
                        weight: w,
                    });
                }
            }
            if let Some(j) = row.positives.keys().find(|j| row.negatives.contains_key(j)) {
                return Err(Error::InvalidLabels {
                    request: i,
                    message: format!("category {j} is both positive and negative"),
                });
            }
            if row.positives.len() + row.negatives.len() != self.category_count {
                return Err(Error::InvalidLabels {
                    request: i,
                    message: format!(
                        "labels cover {} of {} categories",
                        row.positives.len() + row.negatives.len(),
                        self.category_count
                    ),
                });
            }
        }
        Ok(())
    }
}

/// `min(1 - m, max(0, 1 - t))`.
pub fn ramp_loss(t: f64, m: f64) -> f64 {
    (1.0 - t).max(0.0).min(1.0 - m)
}

/// Subgradient of [`ramp_loss`]: -1 strictly inside (m, 1), 0 elsewhere including the kinks.
pub fn ramp_loss_subgrad(t: f64, m: f64) -> f64 {
    if t > m && t < 1.0 {
        -1.0
    } else {
        0.0
    }
}

/// Partial harmonic sum `1 + 1/2 + ... + 1/r`.
pub fn rank_weight(r: usize) -> Result<f64> {
    if r < 1 {
        return Err(Error::InvalidRank(r));
    }
    Ok((1..=r).map(|j| 1.0 / j as f64).sum())
}

/// `rank_weight(1..=n)` as a lookup table indexed by rank - 1.
pub(crate) fn rank_weights(n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=n)
        .map(|j| {
            acc += 1.0 / j as f64;
            acc
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn compute_scores(x: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    if x.len() != params.dim {
        return Err(Error::DimensionMismatch {
            expected: params.dim,
            actual: x.len(),
        });
    }
    Ok((0..params.category_count).map(|j| dot(params.row(j), x)).collect())
}

/// Category ids ordered by descending score; ties go to the lower id.
pub fn ranking_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// 1-based rank of every category (rank 1 = highest score).
pub fn compute_ranks(scores: &[f64]) -> Vec<usize> {
    let mut ranks = vec![0; scores.len()];
    for (pos, c) in ranking_order(scores).into_iter().enumerate() {
        ranks[c] = pos + 1;
    }
    ranks
}
