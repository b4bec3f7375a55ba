//! Training orchestration: PN pretraining, PU training with periodic label
//! re-propagation, model selection on validation MRR, prediction and checkpoints.

mod checkpoint;
mod trials;

pub use checkpoint::{CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use trials::{paired_comparison, run_trials, run_trials_with, MetricComparison, PairedReport, TrialData, TrialReport, TrialRun};

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Dataset, Request};
use crate::encoder::{pooling_backward, EmbeddingTable, Vector};
use crate::error::{Error, Result};
use crate::eval::{evaluate_ranking, misclassification_table, MisclassificationRow, RankingMetrics};
use crate::objective::{
    adam_step, compute_scores, loss_gradients, ranking_order, AdamConfig, AdamState, LossMode, ModelParams,
    ObjectiveConfig, WeightedLabelMatrix,
};
use crate::propagation::{propagate, PropagationConfig, PropagationResult, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Pn,
    PuNearest,
    PuMean,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Pn => "pn",
            TrainMode::PuNearest => "pu_nearest",
            TrainMode::PuMean => "pu_mean",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            TrainMode::Pn => None,
            TrainMode::PuNearest => Some(Variant::Nearest),
            TrainMode::PuMean => Some(Variant::Mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// PN epochs; in PU modes this is the pretraining budget.
    pub epochs_pn: usize,
    pub epochs_pu: usize,
    pub repropagate_every: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub objective: ObjectiveConfig,
    pub optimizer: AdamConfig,
    pub trainable_encoder: bool,
    pub trial_count: usize,
    /// Standard deviation of the initial category weights.
    pub init_scale: f64,
    /// Cut-off of the recall@k metric.
    pub eval_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::PuMean,
            epochs_pn: 10,
            epochs_pu: 50,
            repropagate_every: 5,
            batch_size: 32,
            seed: 0,
            objective: ObjectiveConfig::default(),
            optimizer: AdamConfig::default(),
            trainable_encoder: false,
            trial_count: 10,
            init_scale: 0.01,
            eval_k: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        self.optimizer.validate()?;
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.repropagate_every == 0 {
            return bad("repropagate_every must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.eval_k == 0 {
            return bad("eval_k must be >= 1");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be a non-negative real");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pn,
    Pu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Global epoch index across phases.
    pub epoch: usize,
    pub phase: Phase,
    pub phase_epoch: usize,
    /// Sum of mini-batch losses evaluated before each update.
    pub loss: f64,
    pub repropagated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<RankingMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub weights: AdamState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<AdamState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub categories: Vec<Category>,
    /// Parameters of the epoch with the best validation MRR (final epoch without validation data).
    pub params: ModelParams,
    pub final_params: ModelParams,
    /// Embedding table matching `params`.
    pub table: EmbeddingTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_table: Option<EmbeddingTable>,
    pub best_epoch: Option<usize>,
    pub config: TrainConfig,
    pub optimizer: OptimizerState,
    pub log: Vec<EpochRecord>,
}

/// Mutable training state for one run.
pub struct Trainer<'a> {
    cfg: &'a TrainConfig,
    train: &'a Dataset,
    pub params: ModelParams,
    pub table: EmbeddingTable,
    token_rows: Vec<Vec<Option<usize>>>,
    adam_w: AdamState,
    adam_t: Option<AdamState>,
}

/// Stream id for shuffling in a given (phase, epoch).
fn shuffle_stream(phase: Phase, epoch: usize) -> u64 {
    let tag = match phase {
        Phase::Pn => 1u64,
        Phase::Pu => 2u64,
    };
    (tag << 32) | epoch as u64
}

impl<'a> Trainer<'a> {
    pub fn new(train: &'a Dataset, table: &EmbeddingTable, cfg: &'a TrainConfig) -> Result<Self> {
        cfg.validate()?;
        train.validate()?;
        let c = train.category_count();
        let dim = table.dim();
        let mut table = table.clone();
        table.trainable = cfg.trainable_encoder;
        let token_rows = train
            .requests
            .iter()
            .map(|r| table.lookup(&r.tokens))
            .collect::<Result<Vec<_>>>()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = ModelParams::random(c, dim, cfg.init_scale, &mut init_rng)?;
        let adam_w = AdamState::new(params.weights.len(), cfg.optimizer);
        let adam_t = cfg
            .trainable_encoder
            .then(|| AdamState::new(table.data().len(), cfg.optimizer));
        Ok(Trainer {
            cfg,
            train,
            params,
            table,
            token_rows,
            adam_w,
            adam_t,
        })
    }

    /// Current representation of every training request.
    pub fn train_vectors(&self) -> Vec<Vector> {
        self.token_rows.iter().map(|idx| self.table.pool(idx)).collect()
    }

    pub fn propagate(&self, variant: Variant) -> Result<PropagationResult> {
        let cfg = PropagationConfig {
            variant,
            category_count: self.train.category_count(),
        };
        propagate(self.train, &self.train_vectors(), &cfg)
    }

    /// One pass over the shuffled training set; returns the summed batch loss.
    pub fn run_epoch(&mut self, labels: &WeightedLabelMatrix, mode: LossMode, phase: Phase, epoch: usize) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(shuffle_stream(phase, epoch));
        order.shuffle(&mut rng);

        let mut total = 0.0;
        for batch in order.chunks(self.cfg.batch_size) {
            let vectors: Vec<Vector> = batch.iter().map(|&i| self.table.pool(&self.token_rows[i])).collect();
            let batch_labels = WeightedLabelMatrix {
                category_count: labels.category_count,
                rows: batch.iter().map(|&i| labels.rows[i].clone()).collect(),
            };
            let (loss, grads) = loss_gradients(&vectors, &batch_labels, &self.params, &self.cfg.objective, mode)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("batch loss {loss} in {phase:?} epoch {epoch}")));
            }
            total += loss;
            if let Some(adam_t) = &mut self.adam_t {
                let mut grad_table = vec![0.0; self.table.data().len()];
                for (&i, gx) in batch.iter().zip(&grads.inputs) {
                    pooling_backward(&self.token_rows[i], gx, &mut grad_table);
                }
                adam_step(self.table.data_mut(), &grad_table, adam_t)?;
            }
            adam_step(&mut self.params.weights, &grads.weights, &mut self.adam_w)?;
        }
        Ok(total)
    }

    fn optimizer_state(&self) -> OptimizerState {
        OptimizerState {
            weights: self.adam_w.clone(),
            embeddings: self.adam_t.clone(),
        }
    }
}

/// Top-`C` ranking of every request in `dataset` under the given parameters.
pub fn rank_dataset(params: &ModelParams, table: &EmbeddingTable, dataset: &Dataset) -> Result<Vec<Vec<usize>>> {
    dataset
        .requests
        .iter()
        .map(|r| {
            let x = crate::encoder::encode(r, table)?;
            Ok(ranking_order(&compute_scores(&x, params)?))
        })
        .collect()
}

fn validation_metrics(params: &ModelParams, table: &EmbeddingTable, valid: &Dataset, k: usize) -> Result<Option<RankingMetrics>> {
    if valid.is_empty() {
        return Ok(None);
    }
    let rankings = rank_dataset(params, table, valid)?;
    evaluate_ranking(&rankings, &valid.gold_or_given(), k).map(Some)
}

/// PN training, or PN pretraining followed by PU training with labels
/// re-propagated at the first PU epoch and every `repropagate_every` epochs after.
pub fn train(train_set: &Dataset, valid_set: &Dataset, table: &EmbeddingTable, cfg: &TrainConfig) -> Result<TrainedModel> {
    if valid_set.category_count() != train_set.category_count() && !valid_set.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: train_set.category_count(),
            actual: valid_set.category_count(),
        });
    }
    let mut trainer = Trainer::new(train_set, table, cfg)?;
    let c = train_set.category_count();
    let pn_labels = WeightedLabelMatrix::from_given(&train_set.given(), c);

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams, EmbeddingTable)> = None;
    let mut epoch = 0usize;

    let mut record = |trainer: &Trainer<'_>, rec: EpochRecord, log: &mut Vec<EpochRecord>| -> Result<()> {
        if let Some(m) = rec.valid {
            if best.as_ref().is_none_or(|(mrr, ..)| m.mrr > *mrr) {
                best = Some((m.mrr, rec.epoch, trainer.params.clone(), trainer.table.clone()));
            }
        }
        log::info!(
            "epoch {} ({:?} {}) loss {:.6}{}",
            rec.epoch,
            rec.phase,
            rec.phase_epoch,
            rec.loss,
            rec.valid.map_or_else(String::new, |m| format!(" valid acc {:.4} mrr {:.4}", m.accuracy, m.mrr))
        );
        log.push(rec);
        Ok(())
    };

    for phase_epoch in 0..cfg.epochs_pn {
        let loss = trainer.run_epoch(&pn_labels, LossMode::Pn, Phase::Pn, phase_epoch)?;
        let valid = validation_metrics(&trainer.params, &trainer.table, valid_set, cfg.eval_k)?;
        let rec = EpochRecord {
            epoch,
            phase: Phase::Pn,
            phase_epoch,
            loss,
            repropagated: false,
            valid,
            warnings: Vec::new(),
        };
        record(&trainer, rec, &mut log)?;
        epoch += 1;
    }

    if let Some(variant) = cfg.mode.variant() {
        let mut labels = pn_labels.clone();
        for phase_epoch in 0..cfg.epochs_pu {
            let mut warnings = Vec::new();
            let repropagated = phase_epoch % cfg.repropagate_every == 0;
            if repropagated {
                let result = trainer.propagate(variant)?;
                warnings = result.warnings;
                labels = result.labels;
            }
            let loss = trainer.run_epoch(&labels, LossMode::Pu, Phase::Pu, phase_epoch)?;
            let valid = validation_metrics(&trainer.params, &trainer.table, valid_set, cfg.eval_k)?;
            let rec = EpochRecord {
                epoch,
                phase: Phase::Pu,
                phase_epoch,
                loss,
                repropagated,
                valid,
                warnings,
            };
            record(&trainer, rec, &mut log)?;
            epoch += 1;
        }
    }

    let optimizer = trainer.optimizer_state();
    let (params, table, best_epoch) = match best {
        Some((_, e, p, t)) => (p, t, Some(e)),
        None => (trainer.params.clone(), trainer.table.clone(), None),
    };
    Ok(TrainedModel {
        categories: train_set.categories.clone(),
        params,
        final_params: trainer.params,
        final_table: cfg.trainable_encoder.then_some(trainer.table),
        table,
        best_epoch,
        config: cfg.clone(),
        optimizer,
        log,
    })
}

/// Categories ordered by descending score (ties by lower id) with their scores.
pub fn predict(model: &TrainedModel, request: &Request) -> Result<Vec<(usize, f64)>> {
    let x = crate::encoder::encode(request, &model.table)?;
    let scores = compute_scores(&x, &model.params)?;
    Ok(ranking_order(&scores).into_iter().map(|c| (c, scores[c])).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metrics: RankingMetrics,
    pub misclassification: Vec<MisclassificationRow>,
    #[serde(skip)]
    pub rankings: Vec<Vec<usize>>,
}

pub fn evaluate(model: &TrainedModel, dataset: &Dataset, k: usize) -> Result<EvaluationReport> {
    if dataset.category_count() != model.params.category_count {
        return Err(Error::DimensionMismatch {
            expected: model.params.category_count,
            actual: dataset.category_count(),
        });
    }
    let rankings = rank_dataset(&model.params, &model.table, dataset)?;
    let gold: Vec<BTreeSet<usize>> = dataset.gold_or_given();
    let metrics = evaluate_ranking(&rankings, &gold, k)?;
    let misclassification = misclassification_table(&rankings, &gold, &dataset.given())?;
    Ok(EvaluationReport {
        metrics,
        misclassification,
        rankings,
    })
}
