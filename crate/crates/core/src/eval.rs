//! Ranking metrics, misclassification counts, propagation quality and the
//! comparative rank analysis, with JSON-serialisable results and text tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Function};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub accuracy: f64,
    pub recall_at_k: f64,
    pub k: usize,
    pub mrr: f64,
    pub n: usize,
}

fn validate_rankings(rankings: &[Vec<usize>], gold: &[BTreeSet<usize>]) -> Result<()> {
    if rankings.len() != gold.len() {
        return Err(Error::LengthMismatch(format!(
            "{} rankings for {} gold sets",
            rankings.len(),
            gold.len()
        )));
    }
    for (i, (ranking, g)) in rankings.iter().zip(gold).enumerate() {
        if g.is_empty() {
            return Err(Error::EmptyGold(i));
        }
        let mut seen = vec![false; ranking.len()];
        for &c in ranking {
            if c >= ranking.len() || std::mem::replace(&mut seen[c], true) {
                return Err(Error::MalformedRanking {
                    request: i,
                    message: format!("not a permutation of 0..{}", ranking.len()),
                });
            }
        }
        if let Some(&c) = g.iter().find(|&&c| c >= ranking.len()) {
            return Err(Error::MalformedRanking {
                request: i,
                message: format!("gold category {c} outside the ranking"),
            });
        }
    }
    Ok(())
}

/// 1-based position of the best-ranked gold category.
pub fn best_gold_rank(ranking: &[usize], gold: &BTreeSet<usize>) -> Option<usize> {
    ranking.iter().position(|c| gold.contains(c)).map(|p| p + 1)
}

/// Accuracy (top-1 in gold), recall@k (any gold in top k) and MRR over the
/// best-ranked gold category.
pub fn evaluate_ranking(rankings: &[Vec<usize>], gold: &[BTreeSet<usize>], k: usize) -> Result<RankingMetrics> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    validate_rankings(rankings, gold)?;
    if rankings.is_empty() {
        return Err(Error::InvalidConfig("cannot evaluate an empty prediction set".into()));
    }
    let (mut hits, mut recall, mut rr) = (0usize, 0usize, 0.0f64);
    for (ranking, g) in rankings.iter().zip(gold) {
        let best = best_gold_rank(ranking, g).expect("gold validated to lie within the ranking");
        hits += usize::from(best == 1);
        recall += usize::from(best <= k);
        rr += 1.0 / best as f64;
    }
    let n = rankings.len();
    let metrics = RankingMetrics {
        accuracy: hits as f64 / n as f64,
        recall_at_k: recall as f64 / n as f64,
        k,
        mrr: rr / n as f64,
        n,
    };
    assert!(
        metrics.accuracy <= metrics.recall_at_k,
        "accuracy {} exceeds recall@{k} {}",
        metrics.accuracy,
        metrics.recall_at_k
    );
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisclassificationRow {
    pub category: usize,
    pub errors: usize,
    pub total: usize,
}

/// Top-1 misses per given category, most errors first (ties by category id).
pub fn misclassification_table(
    rankings: &[Vec<usize>],
    gold: &[BTreeSet<usize>],
    given: &[usize],
) -> Result<Vec<MisclassificationRow>> {
    validate_rankings(rankings, gold)?;
    if given.len() != rankings.len() {
        return Err(Error::LengthMismatch(format!(
            "{} given categories for {} rankings",
            given.len(),
            rankings.len()
        )));
    }
    let c = rankings.first().map_or(0, Vec::len);
    let mut rows: Vec<MisclassificationRow> = (0..c)
        .map(|category| MisclassificationRow {
            category,
            errors: 0,
            total: 0,
        })
        .collect();
    for ((ranking, g), &cat) in rankings.iter().zip(gold).zip(given) {
        let row = rows.get_mut(cat).ok_or(Error::UnknownCategory {
            category: cat,
            line: 0,
        })?;
        row.total += 1;
        row.errors += usize::from(!g.contains(&ranking[0]));
    }
    rows.retain(|r| r.total > 0);
    rows.sort_by(|a, b| b.errors.cmp(&a.errors).then(a.category.cmp(&b.category)));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationQuality {
    pub precision: f64,
    /// `None` when no gold category exists beyond the annotation.
    pub recall: Option<f64>,
    pub f1: f64,
    pub propagated: usize,
    pub correct: usize,
    pub gold_extra: usize,
    /// Set when nothing was propagated (precision defined as 0).
    pub precision_undefined: bool,
    /// False positives by (function of the request's given category, function of
    /// the propagated category), normalised by the false-positive total.
    pub false_positive_ratios: [[f64; 3]; 3],
    pub false_positives: usize,
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Quality of propagated positives against complete gold sets.
/// `propagated[i]` excludes the annotated category, gold extras are `gold[i] - {given[i]}`.
pub fn propagation_quality(
    propagated: &[BTreeSet<usize>],
    gold: &[BTreeSet<usize>],
    given: &[usize],
    functions: &[Function],
) -> Result<PropagationQuality> {
    if propagated.len() != gold.len() || given.len() != gold.len() {
        return Err(Error::LengthMismatch(format!(
            "{} propagated, {} gold, {} given",
            propagated.len(),
            gold.len(),
            given.len()
        )));
    }
    let function_of = |c: usize| {
        functions
            .get(c)
            .copied()
            .ok_or(Error::UnknownCategory { category: c, line: 0 })
    };
    let (mut n_prop, mut n_correct, mut n_extra) = (0usize, 0usize, 0usize);
    let mut fp = [[0usize; 3]; 3];
    for ((prop, g), &cat) in propagated.iter().zip(gold).zip(given) {
        let origin = function_of(cat)?.index();
        n_extra += g.iter().filter(|&&c| c != cat).count();
        for &c in prop.iter().filter(|&&c| c != cat) {
            n_prop += 1;
            if g.contains(&c) {
                n_correct += 1;
            } else {
                fp[origin][function_of(c)?.index()] += 1;
            }
        }
    }
    let precision_undefined = n_prop == 0;
    let precision = if precision_undefined {
        0.0
    } else {
        n_correct as f64 / n_prop as f64
    };
    let recall = (n_extra > 0).then(|| n_correct as f64 / n_extra as f64);
    let f1 = harmonic_mean(precision, recall.unwrap_or(0.0));
    let false_positives: usize = fp.iter().flatten().sum();
    let mut false_positive_ratios = [[0.0; 3]; 3];
    if false_positives > 0 {
        for (out, counts) in false_positive_ratios.iter_mut().zip(&fp) {
            for (o, &n) in out.iter_mut().zip(counts) {
                *o = n as f64 / false_positives as f64;
            }
        }
    }
    Ok(PropagationQuality {
        precision,
        recall,
        f1,
        propagated: n_prop,
        correct: n_correct,
        gold_extra: n_extra,
        precision_undefined,
        false_positive_ratios,
        false_positives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparativeRank {
    /// Percentage in [0, 100]; `None` when no request qualifies.
    pub percentage: Option<f64>,
    pub qualifying: usize,
    pub satisfied: usize,
}

/// Among requests where system A misses at rank 1 but has a gold category in
/// ranks 2-5 while system B hits at rank 1, the share where B's top-1 appears
/// in A's ranks 2-5.
pub fn comparative_rank_analysis(
    rankings_a: &[Vec<usize>],
    rankings_b: &[Vec<usize>],
    gold: &[BTreeSet<usize>],
) -> Result<ComparativeRank> {
    validate_rankings(rankings_a, gold)?;
    validate_rankings(rankings_b, gold)?;
    let (mut qualifying, mut satisfied) = (0usize, 0usize);
    for ((a, b), g) in rankings_a.iter().zip(rankings_b).zip(gold) {
        let a_window = &a[1..a.len().min(5)];
        let qualifies = !g.contains(&a[0]) && a_window.iter().any(|c| g.contains(c)) && g.contains(&b[0]);
        if qualifies {
            qualifying += 1;
            satisfied += usize::from(a_window.contains(&b[0]));
        }
    }
    Ok(ComparativeRank {
        percentage: (qualifying > 0).then(|| 100.0 * satisfied as f64 / qualifying as f64),
        qualifying,
        satisfied,
    })
}

pub fn classification_table(rows: &[(String, RankingMetrics)]) -> String {
    let mut out = String::new();
    let k = rows.first().map_or(5, |(_, m)| m.k);
    let _ = writeln!(out, "{:<24} {:>9} {:>9} {:>8}", "Model", "Acc. (%)", format!("R@{k} (%)"), "MRR");
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<24} {:>9.2} {:>9.2} {:>8.4}",
            name,
            100.0 * m.accuracy,
            100.0 * m.recall_at_k,
            m.mrr
        );
    }
    out
}

pub fn misclassification_text(rows: &[MisclassificationRow], categories: &[Category], limit: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<28} {:>8} {:>8}", "Given category", "# errors", "# total");
    for r in rows.iter().take(limit) {
        let name = categories.get(r.category).map_or_else(|| r.category.to_string(), |c| c.name.clone());
        let _ = writeln!(out, "{:<28} {:>8} {:>8}", name, r.errors, r.total);
    }
    out
}

pub fn propagation_quality_text(q: &PropagationQuality) -> String {
    let mut out = String::new();
    let recall = q.recall.map_or_else(|| "undefined".to_owned(), |r| format!("{:.2}", 100.0 * r));
    let _ = writeln!(out, "{:>14} {:>10} {:>8}", "Precision (%)", "Recall (%)", "F1");
    let _ = writeln!(out, "{:>14.2} {:>10} {:>8.4}", 100.0 * q.precision, recall, q.f1);
    let _ = writeln!(out, "\nFalse positives by (origin function -> propagated function), % of {}:", q.false_positives);
    let _ = write!(out, "{:<20}", "");
    for f in Function::ALL {
        let _ = write!(out, " {:>18}", f.as_str());
    }
    out.push('\n');
    for (f, row) in Function::ALL.iter().zip(&q.false_positive_ratios) {
        let _ = write!(out, "{:<20}", f.as_str());
        for v in row {
            let _ = write!(out, " {:>18.2}", 100.0 * v);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn top1_hit() {
        let m = evaluate_ranking(&[vec![5, 0, 1, 2, 3, 4]], &[set(&[2, 5])], 5).unwrap();
        assert_eq!((m.accuracy, m.recall_at_k, m.mrr), (1.0, 1.0, 1.0));
    }

    #[test]
    fn mrr_arithmetic() {
        let rankings = vec![vec![0, 1, 2, 3], vec![0, 1, 2, 3]];
        let m = evaluate_ranking(&rankings, &[set(&[1]), set(&[3])], 5).unwrap();
        assert_eq!(m.mrr, 0.375);
        assert_eq!(m.accuracy, 0.0);
    }

    #[test]
    fn last_place_gold() {
        let m = evaluate_ranking(&[vec![0, 1, 2, 4, 5, 3]], &[set(&[3])], 5).unwrap();
        assert_eq!((m.accuracy, m.recall_at_k), (0.0, 0.0));
        assert!((m.mrr - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ranking_errors() {
        assert!(matches!(evaluate_ranking(&[vec![0, 1]], &[set(&[])], 1), Err(Error::EmptyGold(0))));
        assert!(matches!(
            evaluate_ranking(&[vec![0, 0]], &[set(&[0])], 1),
            Err(Error::MalformedRanking { .. })
        ));
        assert!(evaluate_ranking(&[vec![0, 1]], &[set(&[2])], 1).is_err());
    }

    #[test]
    fn misclassification_counts() {
        let rankings = vec![vec![0, 1, 2], vec![1, 0, 2], vec![0, 1, 2], vec![2, 1, 0]];
        let gold = vec![set(&[0]), set(&[0]), set(&[0, 2]), set(&[2])];
        let given = [0, 0, 0, 2];
        let rows = misclassification_table(&rankings, &gold, &given).unwrap();
        assert_eq!(rows[0], MisclassificationRow { category: 0, errors: 1, total: 3 });
        assert_eq!(rows[1], MisclassificationRow { category: 2, errors: 0, total: 1 });
        let m = evaluate_ranking(&rankings, &gold, 5).unwrap();
        let errors: usize = rows.iter().map(|r| r.errors).sum();
        assert_eq!(errors as f64, ((1.0 - m.accuracy) * m.n as f64).round());

        let perfect = misclassification_table(&rankings[..1], &gold[..1], &given[..1]).unwrap();
        assert!(perfect.iter().all(|r| r.errors == 0));
    }

    fn funcs(c: usize) -> Vec<Function> {
        (0..c).map(|i| Function::ALL[i % 3]).collect()
    }

    #[test]
    fn perfect_propagation() {
        let gold = vec![set(&[0, 1, 2]), set(&[1, 3])];
        let prop = vec![set(&[1, 2]), set(&[3])];
        let q = propagation_quality(&prop, &gold, &[0, 1], &funcs(4)).unwrap();
        assert_eq!((q.precision, q.recall, q.f1), (1.0, Some(1.0), 1.0));
        assert_eq!(q.false_positives, 0);
    }

    #[test]
    fn partial_propagation() {
        // 4 propagated, 3 correct, 30 gold extras.
        let full = set(&(0..=10).collect::<Vec<_>>());
        let gold = vec![full.clone(), full.clone(), full];
        let prop = vec![set(&[1, 2, 3, 11]), set(&[]), set(&[])];
        let q = propagation_quality(&prop, &gold, &[0, 0, 0], &funcs(20)).unwrap();
        assert_eq!((q.propagated, q.correct, q.gold_extra), (4, 3, 30));
        assert_eq!(q.precision, 0.75);
        assert!((q.recall.unwrap() - 0.1).abs() < 1e-15);
        assert!((q.f1 - 0.176_47).abs() < 1e-5);
        // category 11 -> function index 2, origin category 0 -> function index 0
        assert_eq!(q.false_positive_ratios[0][2], 1.0);
    }

    #[test]
    fn empty_propagation_flagged() {
        let q = propagation_quality(&[set(&[])], &[set(&[0, 1])], &[0], &funcs(2)).unwrap();
        assert!(q.precision_undefined);
        assert_eq!((q.precision, q.recall, q.f1), (0.0, Some(0.0), 0.0));
        let q = propagation_quality(&[set(&[1])], &[set(&[0])], &[0], &funcs(2)).unwrap();
        assert_eq!(q.recall, None);
    }

    #[test]
    fn comparative_analysis() {
        let gold = vec![set(&[2, 3])];
        let a = vec![vec![0, 2, 1, 3, 4, 5]];
        let b = vec![vec![2, 0, 1, 3, 4, 5]];
        let r = comparative_rank_analysis(&a, &b, &gold).unwrap();
        assert_eq!(r.percentage, Some(100.0));

        let r = comparative_rank_analysis(&b, &a, &gold).unwrap();
        assert_eq!((r.percentage, r.qualifying), (None, 0));

        // Three qualifying requests, two satisfied.
        let gold = vec![set(&[1]), set(&[2, 5]), set(&[3, 4])];
        let a = vec![vec![0, 1, 2, 3, 4, 5], vec![0, 2, 1, 3, 4, 5], vec![0, 1, 3, 4, 2, 5]];
        let b = vec![vec![1, 0, 2, 3, 4, 5], vec![5, 0, 1, 2, 3, 4], vec![4, 0, 1, 2, 3, 5]];
        let r = comparative_rank_analysis(&a, &b, &gold).unwrap();
        assert_eq!((r.qualifying, r.satisfied), (3, 2));
        assert!((r.percentage.unwrap() - 66.666_666_666_666_67).abs() < 1e-9);
    }

    #[test]
    fn tables_render() {
        let m = evaluate_ranking(&[vec![0, 1]], &[set(&[0])], 5).unwrap();
        let t = classification_table(&[("PN".into(), m)]);
        assert!(t.contains("R@5") && t.contains("100.00"));
        let q = propagation_quality(&[set(&[1])], &[set(&[0])], &[0], &funcs(2)).unwrap();
        assert!(propagation_quality_text(&q).contains("undefined"));
    }

    proptest! {
        #[test]
        fn metric_ordering(
            perms in proptest::collection::vec(Just((0..8).collect::<Vec<usize>>()).prop_shuffle(), 1..20),
            golds in proptest::collection::vec(proptest::collection::btree_set(0usize..8, 1..4), 20),
        ) {
            let gold = &golds[..perms.len()];
            let mut prev = 0.0;
            for k in 1..=8 {
                let m = evaluate_ranking(&perms, gold, k).unwrap();
                prop_assert!(m.accuracy <= m.recall_at_k);
                prop_assert!(m.recall_at_k >= prev);
                prop_assert!(m.mrr > 0.0 && m.mrr <= 1.0);
                prop_assert!(m.accuracy <= m.mrr);
                prop_assert_eq!(m.mrr == 1.0, m.accuracy == 1.0);
                prev = m.recall_at_k;
            }
        }

        #[test]
        fn quality_matches_set_oracle(
            gold in proptest::collection::vec(proptest::collection::btree_set(0usize..10, 0..6), 1..10),
            prop in proptest::collection::vec(proptest::collection::btree_set(0usize..10, 0..6), 10),
            given in proptest::collection::vec(0usize..10, 10),
        ) {
            let n = gold.len();
            let given = &given[..n];
            let gold: Vec<_> = gold.iter().zip(given).map(|(g, &c)| { let mut g = g.clone(); g.insert(c); g }).collect();
            let prop: Vec<_> = prop[..n].iter().zip(given).map(|(p, c)| { let mut p = p.clone(); p.remove(c); p }).collect();
            let q = propagation_quality(&prop, &gold, given, &funcs(10)).unwrap();
            let mut pairs_prop = BTreeSet::new();
            let mut pairs_extra = BTreeSet::new();
            for i in 0..n {
                for &c in &prop[i] { pairs_prop.insert((i, c)); }
                for &c in &gold[i] { if c != given[i] { pairs_extra.insert((i, c)); } }
            }
            let inter = pairs_prop.intersection(&pairs_extra).count();
            if !pairs_prop.is_empty() {
                prop_assert!((q.precision - inter as f64 / pairs_prop.len() as f64).abs() < 1e-15);
            }
            if !pairs_extra.is_empty() {
                prop_assert!((q.recall.unwrap() - inter as f64 / pairs_extra.len() as f64).abs() < 1e-15);
            }
        }
    }
}
