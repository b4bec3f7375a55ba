//! End-to-end training regressions on small synthetic corpora.

use std::collections::BTreeSet;

use proptest::prelude::*;

use pu_rank::corpus::{generate_synthetic, SynthConfig, SyntheticCorpus};
use pu_rank::encoder::encode;
use pu_rank::objective::{
    compute_ranks, compute_scores, pn_loss, pu_loss, LossMode, ModelParams, ObjectiveConfig, WeightedLabelMatrix,
};
use pu_rank::pipeline::{evaluate, predict, train, Phase, TrainConfig, TrainMode, TrainedModel, Trainer};
use pu_rank::propagation::Variant;

fn corpus(noise: f64, seed: u64) -> SyntheticCorpus {
    generate_synthetic(&SynthConfig {
        num_categories: 6,
        train_per_category: 20,
        valid_per_category: 5,
        test_per_category: 5,
        embedding_dim: 8,
        noise_scale: noise,
        gold_radius: 1e-9,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn cfg(mode: TrainMode, pn: usize, pu: usize) -> TrainConfig {
    TrainConfig {
        mode,
        epochs_pn: pn,
        epochs_pu: pu,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn fit(s: &SyntheticCorpus, c: &TrainConfig) -> TrainedModel {
    train(&s.train, &s.valid, &s.embeddings, c).unwrap()
}

#[test]
fn separable_corpus_is_learned() {
    let s = corpus(0.0, 1);
    let m = fit(&s, &cfg(TrainMode::Pn, 50, 0));
    let best = m.log.iter().filter_map(|r| r.valid.as_ref()).map(|v| v.accuracy).fold(0.0, f64::max);
    assert_eq!(best, 1.0);
    assert_eq!(evaluate(&m, &s.valid, 5).unwrap().metrics.accuracy, 1.0);
}

#[test]
fn pn_loss_mostly_decreases() {
    let s = corpus(0.3, 2);
    let m = fit(&s, &cfg(TrainMode::Pn, 60, 0));
    let losses: Vec<f64> = m.log.iter().map(|r| r.loss).collect();
    let regressions = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(regressions * 50 <= losses.len(), "{regressions} regressions in {losses:?}");
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn zero_pu_epochs_match_pn_training() {
    let s = corpus(0.3, 4);
    let pn = fit(&s, &cfg(TrainMode::Pn, 8, 0));
    for mode in [TrainMode::PuMean, TrainMode::PuNearest] {
        let pu = fit(&s, &cfg(mode, 8, 0));
        assert_eq!(pu.params, pn.params);
        assert_eq!(pu.final_params, pn.final_params);
        assert!(pu.log.iter().all(|r| r.phase == Phase::Pn));
    }
}

#[test]
fn frozen_encoder_repropagation_is_stable() {
    let s = corpus(0.3, 5);
    let c = cfg(TrainMode::PuMean, 2, 6);
    let mut t = Trainer::new(&s.train, &s.embeddings, &c).unwrap();
    let before = t.propagate(Variant::Mean).unwrap();
    let labels = WeightedLabelMatrix::from_given(&s.train.given(), s.train.category_count());
    for e in 0..3 {
        t.run_epoch(&labels, LossMode::Pn, Phase::Pn, e).unwrap();
    }
    assert_eq!(t.propagate(Variant::Mean).unwrap(), before);
}

#[test]
fn pu_on_pn_labels_tracks_pn() {
    let s = corpus(0.3, 6);
    let c = cfg(TrainMode::Pn, 4, 0);
    let labels = WeightedLabelMatrix::from_given(&s.train.given(), s.train.category_count());
    let mut a = Trainer::new(&s.train, &s.embeddings, &c).unwrap();
    let mut b = Trainer::new(&s.train, &s.embeddings, &c).unwrap();
    for e in 0..4 {
        let la = a.run_epoch(&labels, LossMode::Pn, Phase::Pn, e).unwrap();
        let lb = b.run_epoch(&labels, LossMode::Pu, Phase::Pn, e).unwrap();
        assert!((la - lb).abs() <= 1e-12 * la.abs().max(1.0));
    }
    assert_eq!(a.params, b.params);
}

#[test]
fn predict_agrees_with_score_ranks() {
    let s = corpus(0.5, 7);
    let m = fit(&s, &cfg(TrainMode::PuNearest, 3, 3));
    for r in &s.test.requests {
        let ranked = predict(&m, r).unwrap();
        let scores = compute_scores(&encode(r, &m.table).unwrap(), &m.params).unwrap();
        let ranks = compute_ranks(&scores);
        for (pos, &(cat, score)) in ranked.iter().enumerate() {
            assert_eq!(ranks[cat], pos + 1);
            assert_eq!(score, scores[cat]);
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let s = corpus(0.5, 8);
    for trainable in [false, true] {
        let c = TrainConfig {
            trainable_encoder: trainable,
            ..cfg(TrainMode::PuMean, 2, 3)
        };
        let m = fit(&s, &c);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path, Some(&s.embeddings)).unwrap();
        assert_eq!(back, m);
        for r in &s.test.requests {
            assert_eq!(predict(&back, r).unwrap(), predict(&m, r).unwrap());
        }
    }
}

#[test]
fn training_is_reproducible() {
    let s = corpus(0.5, 9);
    let c = TrainConfig {
        trainable_encoder: true,
        ..cfg(TrainMode::PuNearest, 2, 4)
    };
    assert_eq!(fit(&s, &c), fit(&s, &c));
}

fn arb_problem() -> impl Strategy<Value = (ModelParams, Vec<Vec<f64>>, Vec<BTreeSet<usize>>)> {
    (2usize..7, 1usize..5, 1usize..5).prop_flat_map(|(c, d, n)| {
        (
            prop::collection::vec(-2.0f64..2.0, c * d),
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), n),
            prop::collection::vec(prop::collection::btree_set(0..c, 1..=c), n),
        )
            .prop_map(move |(w, x, pos)| {
                (
                    ModelParams {
                        dim: d,
                        category_count: c,
                        weights: w,
                    },
                    x,
                    pos,
                )
            })
    })
}

proptest! {
    #[test]
    fn unit_weight_pu_equals_pn((p, x, pos) in arb_problem(), kappa in 0.0f64..5.0) {
        let cfg = ObjectiveConfig { margin: -0.8, kappa };
        let labels = WeightedLabelMatrix::from_positive_sets(&pos, p.category_count);
        let a = pn_loss(&x, &pos, &p, &cfg).unwrap();
        let b = pu_loss(&x, &labels, &p, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn losses_are_bounded((p, x, pos) in arb_problem(), kappa in 0.0f64..5.0) {
        let cfg = ObjectiveConfig { margin: -0.8, kappa };
        let c = p.category_count as f64;
        let harmonic: f64 = (1..=p.category_count).map(|j| 1.0 / j as f64).sum();
        let per_request = 1.8 * (harmonic * c * c + kappa * c);
        let l = pn_loss(&x, &pos, &p, &cfg).unwrap();
        prop_assert!(l >= 0.0 && l <= per_request * x.len() as f64);
    }

    #[test]
    fn zero_weight_labels_contribute_nothing((p, x, pos) in arb_problem()) {
        let cfg = ObjectiveConfig { margin: -0.8, kappa: 1.0 };
        let mut labels = WeightedLabelMatrix::from_positive_sets(&pos, p.category_count);
        for row in &mut labels.rows {
            row.positives.values_mut().chain(row.negatives.values_mut()).for_each(|w| *w = 0.0);
        }
        prop_assert_eq!(pu_loss(&x, &labels, &p, &cfg).unwrap(), 0.0);
    }
}
