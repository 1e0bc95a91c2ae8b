//! Classification metrics and the per-node, per-round record.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregatorKind;
use crate::federation::Role;
use crate::NodeId;

/// `counts[i][j]`: samples with true label `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    counts: Vec<Vec<usize>>,
}

impl ConfusionCounts {
    pub fn from_predictions(predictions: &[usize], labels: &[usize], num_classes: usize) -> Self {
        let mut counts = vec![vec![0; num_classes]; num_classes];
        for (&p, &y) in predictions.iter().zip(labels) {
            counts[y][p] += 1;
        }
        ConfusionCounts { counts }
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn predicted_as(&self, class: usize) -> usize {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn actual(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    #[default]
    Macro,
    Micro,
}

/// Unweighted mean of per-class F1 over the classes that occur in either
/// `labels` or `predictions`. A present class with no true positives scores 0.
pub fn macro_f1(predictions: &[usize], labels: &[usize], num_classes: usize) -> f64 {
    let c = ConfusionCounts::from_predictions(predictions, labels, num_classes);
    let mut sum = 0.0;
    let mut present = 0;
    for k in 0..num_classes {
        let tp = c.get(k, k);
        let fp = c.predicted_as(k) - tp;
        let fn_ = c.actual(k) - tp;
        if tp + fp + fn_ == 0 {
            continue;
        }
        present += 1;
        sum += 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
    }
    if present == 0 {
        0.0
    } else {
        sum / present as f64
    }
}

/// Micro-averaged F1; equals accuracy for single-label classification.
pub fn micro_f1(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

pub fn f1(average: F1Average, predictions: &[usize], labels: &[usize], num_classes: usize) -> f64 {
    match average {
        F1Average::Macro => macro_f1(predictions, labels, num_classes),
        F1Average::Micro => micro_f1(predictions, labels),
    }
}

/// Backdoor attack success rate on the stamped test set `B`:
/// `(sum_j c[j][t] - c[t][t]) / (|B| - c[t][t])`, clamped to `[0, 1]`.
/// `None` when every sample of `B` is truly of class `t`.
pub fn asr(counts: &ConfusionCounts, target: usize, b_size: usize) -> Option<f64> {
    let tt = counts.get(target, target);
    if b_size <= tt {
        return None;
    }
    let hits = counts.predicted_as(target) as f64 - tt as f64;
    Some((hits / (b_size - tt) as f64).clamp(0.0, 1.0))
}

/// Outcome of one node in one round, after aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub node_id: NodeId,
    pub role: Role,
    pub f1: f64,
    pub val_loss: f64,
    pub asr: Option<f64>,
    pub neighbors: Vec<NodeId>,
    pub aggregator: AggregatorKind,
    pub mtd_triggered: bool,
    pub detected: Vec<NodeId>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn f1_examples() {
        assert_eq!(macro_f1(&[0, 1, 2], &[0, 1, 2], 3), 1.0);
        assert_eq!(macro_f1(&[1, 0, 1], &[0, 1, 0], 2), 0.0);
        // class 0: tp 1, fn 1 -> 2/3; class 1: tp 2, fp 1 -> 4/5
        let f = macro_f1(&[0, 1, 1, 1], &[0, 0, 1, 1], 2);
        assert!((f - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-12);
        assert!((f - 0.7333).abs() < 1e-4);
        assert_eq!(micro_f1(&[0, 1, 1, 1], &[0, 0, 1, 1]), 0.75);
    }

    #[test]
    fn absent_classes_do_not_count() {
        assert_eq!(macro_f1(&[0, 1], &[0, 1], 10), 1.0);
    }

    #[test]
    fn asr_examples() {
        // |B| = 10, c[t][t] = 2, column-t total 8
        let labels = [0, 0, 1, 1, 2, 2, 3, 3, 4, 4];
        let preds = [4, 4, 4, 4, 4, 4, 3, 3, 4, 4];
        let c = ConfusionCounts::from_predictions(&preds, &labels, 5);
        assert_eq!(c.predicted_as(4), 8);
        assert_eq!(asr(&c, 4, 10), Some(0.75));

        let c = ConfusionCounts::from_predictions(&[0, 1, 2], &[0, 1, 2], 5);
        assert_eq!(asr(&c, 4, 3), Some(0.0));

        let c = ConfusionCounts::from_predictions(&[4, 4, 4, 4], &[0, 1, 4, 3], 5);
        assert_eq!(asr(&c, 4, 4), Some(1.0));

        let c = ConfusionCounts::from_predictions(&[4, 4], &[4, 4], 5);
        assert_eq!(asr(&c, 4, 2), None);
    }

    proptest! {
        #[test]
        fn macro_f1_permutation_invariant(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let (p, y): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut crate::rng::seeded(seed));
            let (sp, sy): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
            prop_assert_eq!(macro_f1(&p, &y, 4), macro_f1(&sp, &sy, 4));
            let f = macro_f1(&p, &y, 4);
            prop_assert!((0.0..=1.0).contains(&f));
        }

        #[test]
        fn asr_invariant_to_non_target_relabeling(
            pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..40),
        ) {
            // swap classes 0 and 1 (target is 4) in both truth and prediction
            let swap = |c: usize| match c { 0 => 1, 1 => 0, c => c };
            let (p, y): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let (sp, sy): (Vec<_>, Vec<_>) = pairs.iter().map(|&(a, b)| (swap(a), swap(b))).unzip();
            let a = asr(&ConfusionCounts::from_predictions(&p, &y, 5), 4, y.len());
            let b = asr(&ConfusionCounts::from_predictions(&sp, &sy, 5), 4, sy.len());
            prop_assert_eq!(a, b);
        }
    }
}
