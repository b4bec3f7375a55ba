//! Label propagation from annotated requests to unannotated (request, category) pairs.
//!
//! Every request carries exactly one annotated category. For each foreign
//! category `j` of request `i` a representative is chosen: the mean vector of
//! the requests annotated with `j`, or the nearest such request. Distances to
//! representatives are normalised by their global mean `d̄` and mapped through
//! `exp(-(d / d̄) * C / (C - 1))`, then rescaled to [-1, 1] using the global
//! min and max. Non-negative scaled scores become weighted positives, negative
//! ones weighted negatives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::encoder::Vector;
use crate::error::{Error, Result};
use crate::objective::{LabelRow, WeightedLabelMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Nearest,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub variant: Variant,
    pub category_count: usize,
}

/// Per request, a map from foreign category to value.
pub type ScoreMap = Vec<BTreeMap<usize, f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationResult {
    pub variant: Variant,
    pub raw_scores: ScoreMap,
    pub scaled_scores: ScoreMap,
    pub mean_distance: f64,
    pub labels: WeightedLabelMatrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PropagationResult {
    /// Positive labels added beyond each request's annotated category.
    pub fn propagated_positives(&self, given: &[usize]) -> Vec<std::collections::BTreeSet<usize>> {
        self.labels
            .rows
            .iter()
            .zip(given)
            .map(|(row, &g)| row.positives.keys().copied().filter(|&j| j != g).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representatives {
    /// Mean vector per category.
    Mean(Vec<Vector>),
    /// Indices of the annotated requests of each category.
    Nearest(Vec<Vec<usize>>),
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_inputs(vectors: &[Vector], given: &[usize], category_count: usize) -> Result<()> {
    if vectors.len() != given.len() {
        return Err(Error::LengthMismatch(format!(
            "{} vectors for {} requests",
            vectors.len(),
            given.len()
        )));
    }
    if category_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "propagation needs at least 2 categories, got {category_count}"
        )));
    }
    if let Some((line, &g)) = given.iter().enumerate().find(|(_, &g)| g >= category_count) {
        return Err(Error::UnknownCategory {
            category: g,
            line: line + 1,
        });
    }
    Ok(())
}

pub fn category_representatives(
    vectors: &[Vector],
    given: &[usize],
    category_count: usize,
    variant: Variant,
) -> Result<Representatives> {
    check_inputs(vectors, given, category_count)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); category_count];
    for (i, &g) in given.iter().enumerate() {
        members[g].push(i);
    }
    if let Some(j) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCategory(j));
    }
    Ok(match variant {
        Variant::Nearest => Representatives::Nearest(members),
        Variant::Mean => {
            let dim = vectors[0].len();
            Representatives::Mean(
                members
                    .iter()
                    .map(|idx| {
                        let mut mean = vec![0.0; dim];
                        for &i in idx {
                            for (m, v) in mean.iter_mut().zip(&vectors[i]) {
                                *m += v;
                            }
                        }
                        mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
                        mean
                    })
                    .collect(),
            )
        }
    })
}

impl Representatives {
    /// Distance from `x` to the representative of `category`. For the nearest
    /// variant, ties between equidistant requests go to the lower request index.
    pub fn distance(&self, vectors: &[Vector], x: &[f64], category: usize) -> f64 {
        match self {
            Representatives::Mean(means) => euclidean(x, &means[category]),
            Representatives::Nearest(members) => members[category]
                .iter()
                .map(|&m| euclidean(x, &vectors[m]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn category_count(&self) -> usize {
        match self {
            Representatives::Mean(m) => m.len(),
            Representatives::Nearest(m) => m.len(),
        }
    }
}

/// Distances from every request to the representatives of its foreign categories.
pub fn pair_distances(vectors: &[Vector], given: &[usize], reps: &Representatives) -> ScoreMap {
    let c = reps.category_count();
    vectors
        .iter()
        .zip(given)
        .map(|(x, &g)| {
            (0..c)
                .filter(|&j| j != g)
                .map(|j| (j, reps.distance(vectors, x, j)))
                .collect()
        })
        .collect()
}

fn mean_of(map: &ScoreMap) -> Result<f64> {
    let (sum, n) = map
        .iter()
        .flat_map(|row| row.values())
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    if n == 0 {
        return Err(Error::NoEligiblePairs);
    }
    Ok(sum / n as f64)
}

/// Mean over all (request, foreign category) pairs of the distance to the representative.
/// A zero result means every vector coincides; callers treat it as degenerate.
pub fn mean_distance(vectors: &[Vector], given: &[usize], reps: &Representatives) -> Result<f64> {
    mean_of(&pair_distances(vectors, given, reps))
}

/// `exp(-(distance / mean_distance) * C / (C - 1))`.
pub fn similarity(distance: f64, mean_distance: f64, category_count: usize) -> Result<f64> {
    if mean_distance.is_nan() || mean_distance <= 0.0 {
        return Err(Error::NonPositiveMeanDistance(mean_distance));
    }
    if category_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 categories, got {category_count}"
        )));
    }
    let ratio = category_count as f64 / (category_count - 1) as f64;
    Ok((-(distance / mean_distance) * ratio).exp())
}

/// Global min-max rescaling to [-1, 1]. Returns the scaled map and whether the
/// input was degenerate (max == min), in which case every value becomes 0.
pub fn scale_scores(raw: &ScoreMap) -> Result<(ScoreMap, bool)> {
    let values = raw.iter().flat_map(|row| row.values().copied());
    let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if min > max {
        return Err(Error::NoEligiblePairs);
    }
    let degenerate = max == min;
    if degenerate {
        log::warn!("all similarity scores equal ({min}); scaled scores set to 0");
    }
    let scaled = raw
        .iter()
        .map(|row| {
            row.iter()
                .map(|(&j, &s)| {
                    let v = if degenerate {
                        0.0
                    } else {
                        -1.0 + 2.0 * (s - min) / (max - min)
                    };
                    (j, v)
                })
                .collect()
        })
        .collect();
    Ok((scaled, degenerate))
}

/// Non-negative scaled scores become positives weighted by the score, negative
/// ones negatives weighted by its magnitude. Annotated pairs are positive with weight 1.
pub fn assign_labels(scaled: &ScoreMap, given: &[usize], category_count: usize) -> WeightedLabelMatrix {
    let rows = scaled
        .iter()
        .zip(given)
        .map(|(scores, &g)| {
            let mut row = LabelRow::default();
            row.positives.insert(g, 1.0);
            for (&j, &s) in scores {
                if j == g {
                    continue;
                }
                if s >= 0.0 {
                    row.positives.insert(j, s);
                } else {
                    row.negatives.insert(j, -s);
                }
            }
            row
        })
        .collect();
    WeightedLabelMatrix {
        category_count,
        rows,
    }
}

/// Representatives, mean distance, similarities, scaling and label assignment in one pass.
pub fn propagate_given(vectors: &[Vector], given: &[usize], cfg: &PropagationConfig) -> Result<PropagationResult> {
    let c = cfg.category_count;
    let reps = category_representatives(vectors, given, c, cfg.variant)?;
    let distances = pair_distances(vectors, given, &reps);
    let d_bar = mean_of(&distances)?;
    let mut warnings = Vec::new();

    if d_bar == 0.0 {
        let msg = "mean distance is 0: all vectors coincide; propagated pairs get weight-0 positive labels";
        log::warn!("{msg}");
        warnings.push(msg.to_owned());
        let ones: ScoreMap = distances.iter().map(|row| row.keys().map(|&j| (j, 1.0)).collect()).collect();
        let zeros: ScoreMap = distances.iter().map(|row| row.keys().map(|&j| (j, 0.0)).collect()).collect();
        let labels = assign_labels(&zeros, given, c);
        return Ok(PropagationResult {
            variant: cfg.variant,
            raw_scores: ones,
            scaled_scores: zeros,
            mean_distance: d_bar,
            labels,
            warnings,
        });
    }

    let raw = distances
        .iter()
        .map(|row| {
            row.iter()
                .map(|(&j, &d)| similarity(d, d_bar, c).map(|s| (j, s)))
                .collect::<Result<BTreeMap<_, _>>>()
        })
        .collect::<Result<ScoreMap>>()?;
    let (scaled, degenerate) = scale_scores(&raw)?;
    if degenerate {
        warnings.push("all similarity scores equal; scaled scores set to 0".to_owned());
    }
    let labels = assign_labels(&scaled, given, c);
    Ok(PropagationResult {
        variant: cfg.variant,
        raw_scores: raw,
        scaled_scores: scaled,
        mean_distance: d_bar,
        labels,
        warnings,
    })
}

pub fn propagate(dataset: &Dataset, vectors: &[Vector], cfg: &PropagationConfig) -> Result<PropagationResult> {
    if dataset.category_count() != cfg.category_count {
        return Err(Error::DimensionMismatch {
            expected: dataset.category_count(),
            actual: cfg.category_count,
        });
    }
    propagate_given(vectors, &dataset.given(), cfg)
}
