//! Holdout evaluation: confusion matrices, accuracy and ROC AUC.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ensemble::{train_forest, ForestModel, ForestParams};
use super::features::FeatureTable;
use crate::error::{Error, Result};
use crate::rng::{domain, substream};
use crate::transcript::DegreeBand;

/// Seeded shuffle, then the first `round(test_fraction * n)` shuffled rows
/// form the test set. Both index lists are returned sorted.
pub fn holdout_split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidSplit(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    if n < 2 {
        return Err(Error::InvalidSplit(format!("{n} rows cannot be split")));
    }
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidSplit(format!(
            "test fraction {test_fraction} of {n} rows leaves an empty {} set",
            if n_test == 0 { "test" } else { "training" }
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, &[domain::SPLIT]));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Counts indexed `[true band][predicted band]`, bands worst to best.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; DegreeBand::COUNT]; DegreeBand::COUNT],
}

impl ConfusionMatrix {
    pub fn from_predictions(truths: &[DegreeBand], predictions: &[DegreeBand]) -> Result<Self> {
        if truths.len() != predictions.len() {
            return Err(Error::LengthMismatch {
                expected: truths.len(),
                actual: predictions.len(),
            });
        }
        let mut m = Self::default();
        for (t, p) in truths.iter().zip(predictions) {
            m.add(*t, *p, 1);
        }
        Ok(m)
    }

    pub fn add(&mut self, truth: DegreeBand, predicted: DegreeBand, count: u64) {
        self.counts[truth.index()][predicted.index()] += count;
    }

    pub fn get(&self, truth: DegreeBand, predicted: DegreeBand) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..DegreeBand::COUNT).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, truth: DegreeBand) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn column_total(&self, predicted: DegreeBand) -> u64 {
        self.counts.iter().map(|r| r[predicted.index()]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Aligned text table with rows and columns in the published column order
    /// and row/column totals.
    pub fn to_table_text(&self) -> String {
        let order = DegreeBand::TABLE_ORDER;
        let w0 = order.iter().map(|b| b.label().len()).max().unwrap_or(0).max("Correct class".len());
        let widths: Vec<usize> = order.iter().map(|b| b.label().len().max(5)).collect();
        let mut s = String::new();
        let _ = write!(s, "{:<w0$}", "Correct class \\ Prediction");
        s.clear();
        let _ = write!(s, "{:<w0$}", "");
        for (b, w) in order.iter().zip(&widths) {
            let _ = write!(s, "  {:>w$}", b.label());
        }
        let _ = writeln!(s, "  {:>5}", "Total");
        for t in order {
            let _ = write!(s, "{:<w0$}", t.label());
            for (p, w) in order.iter().zip(&widths) {
                let _ = write!(s, "  {:>w$}", self.get(t, *p));
            }
            let _ = writeln!(s, "  {:>5}", self.row_total(t));
        }
        let _ = write!(s, "{:<w0$}", "Total");
        for (p, w) in order.iter().zip(&widths) {
            let _ = write!(s, "  {:>w$}", self.column_total(*p));
        }
        let _ = writeln!(s, "  {:>5}", self.total());
        s
    }
}

/// Most probable band; ties go to the worse band.
pub fn argmax_band(proba: &[f64]) -> DegreeBand {
    let mut best = 0;
    for (i, &p) in proba.iter().enumerate() {
        if p > proba[best] {
            best = i;
        }
    }
    DegreeBand::from_index(best).expect("probability vector has one entry per band")
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auc_binary(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidValue("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc("labels contain a single class".into()));
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the Mann-Whitney U, in integers: a positive beats every negative
    // in a lower tie group and half-beats those in its own group.
    let mut twice_u: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            if pairs[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AucAveraging {
    /// Per-class AUCs weighted by class prevalence.
    #[default]
    Weighted,
    /// Unweighted mean of per-class AUCs.
    Macro,
}

impl std::str::FromStr for AucAveraging {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(AucAveraging::Weighted),
            "macro" => Ok(AucAveraging::Macro),
            other => Err(Error::Config(format!("unknown AUC averaging {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassAuc {
    pub overall: f64,
    /// One-vs-rest AUC per class; `None` for classes absent from the labels.
    pub per_class: Vec<Option<f64>>,
}

/// One-vs-rest AUC of every class present in `labels`, scored by that
/// class's probability, then averaged.
pub fn auc_multiclass(proba: &[Vec<f64>], labels: &[usize], averaging: AucAveraging) -> Result<MulticlassAuc> {
    if proba.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: proba.len(),
            actual: labels.len(),
        });
    }
    let n_classes = proba.first().map_or(0, Vec::len);
    if let Some(bad) = proba.iter().find(|p| p.len() != n_classes) {
        return Err(Error::LengthMismatch {
            expected: n_classes,
            actual: bad.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidValue(format!("label {bad} >= class count {n_classes}")));
    }
    let mut prevalence = vec![0usize; n_classes];
    for &l in labels {
        prevalence[l] += 1;
    }
    if prevalence.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::UndefinedAuc("fewer than two classes present".into()));
    }
    let mut per_class = vec![None; n_classes];
    let (mut acc, mut weight) = (0.0, 0.0);
    for c in 0..n_classes {
        if prevalence[c] == 0 {
            continue;
        }
        let scores: Vec<f64> = proba.iter().map(|p| p[c]).collect();
        let is_c: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let auc = auc_binary(&scores, &is_c)?;
        per_class[c] = Some(auc);
        let w = match averaging {
            AucAveraging::Weighted => prevalence[c] as f64,
            AucAveraging::Macro => 1.0,
        };
        acc += w * auc;
        weight += w;
    }
    Ok(MulticlassAuc {
        overall: acc / weight,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub confusion: ConfusionMatrix,
    pub classification_accuracy: f64,
    pub auc: f64,
    /// Always `1 - auc`.
    pub error_rate: f64,
    pub per_class_auc: BTreeMap<DegreeBand, f64>,
    pub averaging: AucAveraging,
    pub n_train: usize,
    pub n_test: usize,
}

/// Scores `model` on held-out rows.
pub fn evaluate(
    model: &ForestModel,
    rows: &[Vec<f64>],
    truths: &[DegreeBand],
    averaging: AucAveraging,
    n_train: usize,
) -> Result<EvaluationReport> {
    if model.n_classes != DegreeBand::COUNT {
        return Err(Error::InvalidValue(format!(
            "model has {} classes, expected {}",
            model.n_classes,
            DegreeBand::COUNT
        )));
    }
    let proba = model.predict_proba_batch(rows)?;
    let predictions: Vec<DegreeBand> = proba.iter().map(|p| argmax_band(p)).collect();
    let confusion = ConfusionMatrix::from_predictions(truths, &predictions)?;
    let labels: Vec<usize> = truths.iter().map(|b| b.index()).collect();
    let auc = auc_multiclass(&proba, &labels, averaging)?;
    let per_class_auc = auc
        .per_class
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|v| (DegreeBand::ALL[i], v)))
        .collect();
    Ok(EvaluationReport {
        classification_accuracy: confusion.accuracy(),
        confusion,
        auc: auc.overall,
        error_rate: 1.0 - auc.overall,
        per_class_auc,
        averaging,
        n_train,
        n_test: rows.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    pub forest: ForestParams,
    pub test_fraction: f64,
    pub averaging: AucAveraging,
}

/// Test fraction that reproduces the published 284 evaluated of 406 students.
pub const PUBLISHED_TEST_FRACTION: f64 = 0.6995;

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            test_fraction: PUBLISHED_TEST_FRACTION,
            averaging: AucAveraging::default(),
        }
    }
}

/// Trains on a holdout split of `table` and evaluates, using `x` as features.
fn train_and_evaluate(
    x: &[Vec<f64>],
    labels: &[DegreeBand],
    split: &(Vec<usize>, Vec<usize>),
    settings: &EvaluationSettings,
    seed: u64,
) -> Result<EvaluationReport> {
    let (train, test) = split;
    let pick = |idx: &[usize]| -> Vec<Vec<f64>> { idx.iter().map(|&i| x[i].clone()).collect() };
    let train_y: Vec<usize> = train.iter().map(|&i| labels[i].index()).collect();
    let test_y: Vec<DegreeBand> = test.iter().map(|&i| labels[i]).collect();
    let model = train_forest(&pick(train), &train_y, DegreeBand::COUNT, &settings.forest, seed)?;
    evaluate(&model, &pick(test), &test_y, settings.averaging, train.len())
}

pub fn train_and_evaluate_table(table: &FeatureTable, settings: &EvaluationSettings, seed: u64) -> Result<EvaluationReport> {
    let split = holdout_split(table.rows.len(), settings.test_fraction, seed)?;
    train_and_evaluate(&table.features(), &table.labels(), &split, settings, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarComparison {
    pub without_car: EvaluationReport,
    pub with_car: EvaluationReport,
    /// `with_car.auc - without_car.auc`.
    pub auc_delta: f64,
    pub seed: u64,
}

/// Evaluates the same split and forest seed twice: with the CAR column
/// replaced by a constant, then with it intact.
pub fn compare_with_without_car(table: &FeatureTable, settings: &EvaluationSettings, seed: u64) -> Result<CarComparison> {
    let car = table
        .car_column
        .ok_or_else(|| Error::Config("feature table has no CAR column".into()))?;
    let split = holdout_split(table.rows.len(), settings.test_fraction, seed)?;
    let labels = table.labels();
    let without_car = train_and_evaluate(&table.masked_features(car), &labels, &split, settings, seed)?;
    let with_car = train_and_evaluate(&table.features(), &labels, &split, settings, seed)?;
    Ok(CarComparison {
        auc_delta: with_car.auc - without_car.auc,
        without_car,
        with_car,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Exhaustive pairwise count, kept independent of the sort-based path.
    fn auc_pairwise(scores: &[f64], labels: &[bool]) -> f64 {
        let mut twice = 0u64;
        let mut pairs = 0u64;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1;
                if scores[i] > scores[j] {
                    twice += 2;
                } else if scores[i] == scores[j] {
                    twice += 1;
                }
            }
        }
        twice as f64 / (2 * pairs) as f64
    }

    #[test]
    fn split_examples() {
        let (train, test) = holdout_split(406, PUBLISHED_TEST_FRACTION, 1).unwrap();
        assert_eq!(test.len(), 284);
        assert_eq!(train.len(), 122);
        let mut all: Vec<_> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..406).collect::<Vec<_>>());

        assert_eq!(holdout_split(10, 0.5, 3).unwrap(), holdout_split(10, 0.5, 3).unwrap());
        assert!(matches!(holdout_split(2, 0.99, 3), Err(Error::InvalidSplit(_))));
        assert!(holdout_split(10, 0.01, 3).is_err());
        assert!(holdout_split(10, 1.0, 3).is_err());
        assert!(holdout_split(1, 0.5, 3).is_err());
    }

    #[test]
    fn confusion_examples() {
        let bands = [DegreeBand::Fail, DegreeBand::First, DegreeBand::Third, DegreeBand::Pass, DegreeBand::First];
        let m = ConfusionMatrix::from_predictions(&bands, &bands).unwrap();
        assert_eq!(m.trace(), 5);
        assert_eq!(m.total(), 5);
        assert_eq!(m.accuracy(), 1.0);
        for t in DegreeBand::ALL {
            for p in DegreeBand::ALL {
                if t != p {
                    assert_eq!(m.get(t, p), 0);
                }
            }
        }
        assert!(ConfusionMatrix::from_predictions(&bands, &bands[1..]).is_err());
    }

    #[test]
    fn table_text_layout() {
        let mut m = ConfusionMatrix::default();
        m.add(DegreeBand::First, DegreeBand::First, 36);
        m.add(DegreeBand::First, DegreeBand::UpperSecond, 37);
        let text = m.to_table_text();
        let header = text.lines().next().unwrap();
        let cols: Vec<usize> = DegreeBand::TABLE_ORDER.iter().map(|b| header.find(b.label()).unwrap()).collect();
        assert!(cols.windows(2).all(|w| w[0] < w[1]));
        let first_row = text.lines().find(|l| l.starts_with("First")).unwrap();
        assert!(first_row.trim_end().ends_with("73"));
        assert!(text.lines().last().unwrap().trim_end().ends_with("73"));
    }

    #[test]
    fn argmax_ties_go_to_worse_band() {
        assert_eq!(argmax_band(&[0.0, 0.0, 0.5, 0.0, 0.0, 0.5]), DegreeBand::Third);
        assert_eq!(argmax_band(&[1.0 / 6.0; 6]), DegreeBand::Fail);
        assert_eq!(argmax_band(&[0.0, 0.0, 0.0, 0.0, 0.1, 0.9]), DegreeBand::First);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_binary(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc_binary(&[0.5; 4], &[false, true, false, true]).unwrap(), 0.5);
        let v = auc_binary(&[0.9, 0.8, 0.4, 0.3], &[true, true, false, true]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(auc_binary(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedAuc(_))));
        assert!(auc_binary(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn multiclass_examples() {
        // binary reduction
        let p1 = [0.9, 0.2, 0.6, 0.4, 0.7];
        let labels = [1usize, 0, 1, 0, 0];
        let proba: Vec<Vec<f64>> = p1.iter().map(|&p| vec![1.0 - p, p]).collect();
        let binary = auc_binary(&p1, &labels.map(|l| l == 1)).unwrap();
        let multi = auc_multiclass(&proba, &labels, AucAveraging::Weighted).unwrap();
        assert!((multi.overall - binary).abs() < 1e-12);

        // perfect classifier
        let labels = [0usize, 1, 2, 2, 1, 0];
        let proba: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| (0..3).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
            .collect();
        for avg in [AucAveraging::Weighted, AucAveraging::Macro] {
            let m = auc_multiclass(&proba, &labels, avg).unwrap();
            assert_eq!(m.overall, 1.0);
            assert!(m.per_class.iter().all(|a| *a == Some(1.0)));
        }

        // absent classes are excluded
        let proba = vec![vec![0.2, 0.8, 0.0], vec![0.7, 0.3, 0.0]];
        let m = auc_multiclass(&proba, &[1, 0], AucAveraging::Macro).unwrap();
        assert_eq!(m.per_class[2], None);
        assert_eq!(m.overall, 1.0);
        assert!(auc_multiclass(&proba, &[1, 1], AucAveraging::Macro).is_err());
    }

    #[test]
    fn class_with_perfect_ranking_scores_one() {
        // class 0 perfectly ranked, classes 1 and 2 muddled
        let proba = vec![
            vec![0.9, 0.05, 0.05],
            vec![0.8, 0.1, 0.1],
            vec![0.1, 0.5, 0.4],
            vec![0.1, 0.4, 0.5],
            vec![0.2, 0.45, 0.35],
            vec![0.0, 0.3, 0.7],
        ];
        let labels = [0, 0, 2, 1, 2, 1];
        let m = auc_multiclass(&proba, &labels, AucAveraging::Weighted).unwrap();
        assert_eq!(m.per_class[0], Some(1.0));
        assert!(m.per_class[1].unwrap() < 1.0);
    }

    #[test]
    fn null_multiclass_auc() {
        let mut rng = substream(2024, &[7]);
        let n = 3000;
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let proba: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let m = auc_multiclass(&proba, &labels, AucAveraging::Weighted).unwrap();
        assert!((m.overall - 0.5).abs() < 0.03, "{}", m.overall);
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_count(
            data in proptest::collection::vec((0u8..8, any::<bool>()), 2..50),
        ) {
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0) / 8.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            prop_assert_eq!(auc_binary(&scores, &labels).unwrap(), auc_pairwise(&scores, &labels));
        }

        #[test]
        fn auc_invariant_under_increasing_maps(
            data in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..50),
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let mapped: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            prop_assert_eq!(auc_binary(&scores, &labels).unwrap(), auc_binary(&mapped, &labels).unwrap());
        }

        #[test]
        fn confusion_rows_match_truth_counts(
            pairs in proptest::collection::vec((0usize..6, 0usize..6), 1..100),
        ) {
            let truths: Vec<DegreeBand> = pairs.iter().map(|p| DegreeBand::ALL[p.0]).collect();
            let preds: Vec<DegreeBand> = pairs.iter().map(|p| DegreeBand::ALL[p.1]).collect();
            let m = ConfusionMatrix::from_predictions(&truths, &preds).unwrap();
            for b in DegreeBand::ALL {
                prop_assert_eq!(m.row_total(b), truths.iter().filter(|&&t| t == b).count() as u64);
            }
            let correct = pairs.iter().filter(|p| p.0 == p.1).count();
            prop_assert_eq!(m.accuracy(), correct as f64 / pairs.len() as f64);
            prop_assert_eq!(m.total(), pairs.len() as u64);
        }
    }
}
