use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    compute_ranks, compute_scores, ramp_loss, ramp_loss_subgrad, rank_weights, ModelParams, ObjectiveConfig,
    WeightedLabelMatrix,
};
use crate::encoder::Vector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Positive keys of each label row, every other category negative, unit weights.
    Pn,
    /// Stored positive/negative weights.
    Pu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Shaped like [`ModelParams::weights`].
    pub weights: Vec<f64>,
    /// Gradient w.r.t. each request vector.
    pub inputs: Vec<Vector>,
}

fn check_lengths(vectors: &[Vector], labels: usize) -> Result<()> {
    if vectors.len() != labels {
        return Err(Error::LengthMismatch(format!(
            "{} vectors but {labels} label rows",
            vectors.len()
        )));
    }
    Ok(())
}

/// Sum over requests of the rank-weighted pairwise ramp loss plus `kappa` times
/// the per-category sign term, treating every non-positive category as negative.
pub fn pn_loss(
    vectors: &[Vector],
    positives: &[BTreeSet<usize>],
    params: &ModelParams,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_lengths(vectors, positives.len())?;
    let c = params.category_count;
    let weights = rank_weights(c);
    let mut total = 0.0;
    for (i, (x, pos)) in vectors.iter().zip(positives).enumerate() {
        if pos.is_empty() {
            return Err(Error::EmptyPositives(i));
        }
        if let Some(&j) = pos.iter().find(|&&j| j >= c) {
            return Err(Error::InvalidLabels {
                request: i,
                message: format!("category {j} out of range"),
            });
        }
        let s = compute_scores(x, params)?;
        let ranks = compute_ranks(&s);
        let mut pairwise = 0.0;
        for &j in pos {
            let l = weights[ranks[j] - 1];
            for k in (0..c).filter(|k| !pos.contains(k)) {
                pairwise += l * ramp_loss(s[j] - s[k], cfg.margin);
            }
        }
        let mut unary = 0.0;
        for (j, &sj) in s.iter().enumerate() {
            let y = if pos.contains(&j) { 1.0 } else { -1.0 };
            unary += ramp_loss(y * sj, cfg.margin);
        }
        total += pairwise + cfg.kappa * unary;
    }
    Ok(total)
}

/// Weighted variant: pairwise terms scale by the product of the positive and
/// negative weights, sign terms by the label's own weight.
pub fn pu_loss(
    vectors: &[Vector],
    labels: &WeightedLabelMatrix,
    params: &ModelParams,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    Ok(evaluate(vectors, labels, params, cfg, LossMode::Pu, false)?.0)
}

/// Loss and its subgradient with ranks and rank weights held fixed at the
/// current scores, and subgradient 0 at the ramp kinks.
pub fn loss_gradients(
    vectors: &[Vector],
    labels: &WeightedLabelMatrix,
    params: &ModelParams,
    cfg: &ObjectiveConfig,
    mode: LossMode,
) -> Result<(f64, Gradients)> {
    let (loss, grads) = evaluate(vectors, labels, params, cfg, mode, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

fn evaluate(
    vectors: &[Vector],
    labels: &WeightedLabelMatrix,
    params: &ModelParams,
    cfg: &ObjectiveConfig,
    mode: LossMode,
    with_grad: bool,
) -> Result<(f64, Option<Gradients>)> {
    cfg.validate()?;
    check_lengths(vectors, labels.len())?;
    let c = params.category_count;
    if labels.category_count != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            actual: labels.category_count,
        });
    }
    if mode == LossMode::Pu {
        labels.validate()?;
    }
    let rank_w = rank_weights(c);
    let m = cfg.margin;

    let mut total = 0.0;
    let mut grad_w = if with_grad { vec![0.0; params.weights.len()] } else { Vec::new() };
    let mut grad_x = Vec::with_capacity(if with_grad { vectors.len() } else { 0 });
    // Signed per-category label weight: +w positive, -w negative, 0 unused.
    let mut signed = vec![0.0f64; c];
    let mut is_pos = vec![false; c];
    let mut grad_s = vec![0.0f64; c];

    for (i, (x, row)) in vectors.iter().zip(&labels.rows).enumerate() {
        if row.positives.is_empty() {
            return Err(Error::EmptyPositives(i));
        }
        is_pos.iter_mut().for_each(|p| *p = false);
        for &j in row.positives.keys() {
            if j >= c {
                return Err(Error::InvalidLabels {
                    request: i,
                    message: format!("category {j} out of range"),
                });
            }
            is_pos[j] = true;
        }
        match mode {
            LossMode::Pn => {
                for j in 0..c {
                    signed[j] = if is_pos[j] { 1.0 } else { -1.0 };
                }
            }
            LossMode::Pu => {
                for j in 0..c {
                    signed[j] = if is_pos[j] {
                        row.positives[&j]
                    } else {
                        -row.negatives[&j]
                    };
                }
            }
        }

        let s = compute_scores(x, params)?;
        let ranks = compute_ranks(&s);
        grad_s.iter_mut().for_each(|g| *g = 0.0);

        let mut pairwise = 0.0;
        for j in (0..c).filter(|&j| is_pos[j]) {
            let l = rank_w[ranks[j] - 1];
            for k in (0..c).filter(|&k| !is_pos[k]) {
                let coef = match mode {
                    LossMode::Pn => l,
                    LossMode::Pu => signed[j] * -signed[k] * l,
                };
                let t = s[j] - s[k];
                pairwise += coef * ramp_loss(t, m);
                if with_grad {
                    let d = coef * ramp_loss_subgrad(t, m);
                    grad_s[j] += d;
                    grad_s[k] -= d;
                }
            }
        }
        let mut unary = 0.0;
        for j in 0..c {
            let y = if is_pos[j] { 1.0 } else { -1.0 };
            let w = match mode {
                LossMode::Pn => 1.0,
                LossMode::Pu => signed[j].abs(),
            };
            let t = y * s[j];
            unary += match mode {
                LossMode::Pn => ramp_loss(t, m),
                LossMode::Pu => w * ramp_loss(t, m),
            };
            if with_grad {
                grad_s[j] += cfg.kappa * w * y * ramp_loss_subgrad(t, m);
            }
        }
        total += pairwise + cfg.kappa * unary;

        if with_grad {
            let mut gx = vec![0.0; params.dim];
            for (j, &g) in grad_s.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let w_row = params.row(j);
                let gw = &mut grad_w[j * params.dim..(j + 1) * params.dim];
                for d in 0..params.dim {
                    gw[d] += g * x[d];
                    gx[d] += g * w_row[d];
                }
            }
            grad_x.push(gx);
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {total}")));
    }
    let grads = with_grad.then_some(Gradients {
        weights: grad_w,
        inputs: grad_x,
    });
    Ok((total, grads))
}
