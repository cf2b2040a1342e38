//! AUC-ROC evaluation plus detection and label-recovery diagnostics for
//! synthetic runs with known ground truth.

use rayon::prelude::*;

use crate::classifier::MultiLabelClassifier;
use crate::data::{Dataset, LabelKind, LabelMatrix};
use crate::detect::CleanNoisySplit;
use crate::error::{Error, Result};

/// Mann-Whitney AUC via midranks, O(N log N).
///
/// Equal to (#concordant pairs + 0.5 * #tied pairs) / (P * Q), and because
/// ranks are half-integers the sort route gives the bitwise-identical value
/// to the pairwise formula.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("AUC of an empty score list".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("AUC scores".into()));
    }
    let p = labels.iter().filter(|&&l| l).count();
    let q = labels.len() - p;
    if p == 0 || q == 0 {
        return Err(Error::SingleClassLabels { positives: p, negatives: q });
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 1-based midranks over positives; ties share the average rank.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (p * (p + 1)) as f64 / 2.0;
    Ok(u / (p * q) as f64)
}

#[derive(Debug, Clone)]
pub struct SkippedClass {
    pub class: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// AUC per class; None where the test split lacks one label value.
    pub per_class_auc: Vec<Option<f64>>,
    /// Mean over the defined entries only.
    pub mean_auc: f64,
    pub skipped: Vec<SkippedClass>,
}

/// Per-class AUC of the classifier on a binary-labelled test set. Ranking
/// uses raw logits; the sigmoid is monotone, so probabilities would give the
/// same AUC but can collapse to exact ties when saturated.
pub fn evaluate(clf: &MultiLabelClassifier, test: &Dataset) -> Result<EvalReport> {
    if test.labels.kind() != LabelKind::Binary {
        return Err(Error::NotBinary("evaluation needs 0/1 test labels".into()));
    }
    if clf.feature_dim() != test.feature_dim() || clf.n_classes() != test.n_classes() {
        return Err(Error::DimensionMismatch(format!(
            "classifier is {}x{}, test set is {}x{}",
            clf.n_classes(),
            clf.feature_dim(),
            test.n_classes(),
            test.feature_dim()
        )));
    }

    let logits: Vec<Vec<f64>> = (0..test.n_samples())
        .into_par_iter()
        .map(|i| clf.logits(test.features.row(i)))
        .collect::<Result<_>>()?;

    let c = test.n_classes();
    let mut per_class = Vec::with_capacity(c);
    let mut skipped = Vec::new();
    let mut sum = 0.0;
    let mut defined = 0usize;
    for class in 0..c {
        let scores: Vec<f64> = logits.iter().map(|row| row[class]).collect();
        let labels: Vec<bool> =
            (0..test.n_samples()).map(|i| test.labels.row(i)[class] == 1.0).collect();
        match auc_roc(&scores, &labels) {
            Ok(auc) => {
                per_class.push(Some(auc));
                sum += auc;
                defined += 1;
            }
            Err(Error::SingleClassLabels { positives, .. }) => {
                per_class.push(None);
                let reason = if positives == 0 {
                    "no positive samples".to_string()
                } else {
                    "no negative samples".to_string()
                };
                skipped.push(SkippedClass { class, reason });
            }
            Err(e) => return Err(e),
        }
    }
    if defined == 0 {
        return Err(Error::NoEvaluableClass);
    }
    Ok(EvalReport { per_class_auc: per_class, mean_auc: sum / defined as f64, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 of the detector, treating "noisy" as the positive
/// class. Degenerate denominators score 0.
pub fn detection_metrics(split: &CleanNoisySplit, truth_noisy: &[usize]) -> DetectionMetrics {
    let mut truth: Vec<usize> = truth_noisy.to_vec();
    truth.sort_unstable();
    truth.dedup();

    // split.noisy is ascending by construction; intersect with two pointers.
    let mut tp = 0usize;
    let (mut a, mut b) = (0, 0);
    while a < split.noisy.len() && b < truth.len() {
        match split.noisy[a].cmp(&truth[b]) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {
                tp += 1;
                a += 1;
                b += 1;
            }
        }
    }
    let predicted = split.noisy.len();
    let actual = truth.len();
    let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
    let recall = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    DetectionMetrics { precision, recall, f1 }
}

#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub detection: DetectionMetrics,
    /// Mean per-sample L1 distance from the corrupted labels to the truth.
    pub l1_before: f64,
    /// Same distance after relabeling.
    pub l1_after: f64,
}

pub fn recovery_metrics(
    noisy: &LabelMatrix,
    relabeled: &LabelMatrix,
    truth: &LabelMatrix,
    split: &CleanNoisySplit,
    corrupted: &[usize],
) -> Result<RecoveryReport> {
    let shape = (noisy.n_samples(), noisy.n_classes());
    for (name, m) in [("relabeled", relabeled), ("true", truth)] {
        if (m.n_samples(), m.n_classes()) != shape {
            return Err(Error::DimensionMismatch(format!(
                "{name} labels are {}x{}, expected {}x{}",
                m.n_samples(),
                m.n_classes(),
                shape.0,
                shape.1
            )));
        }
    }
    let l1 = |a: &LabelMatrix, b: &LabelMatrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..a.n_samples() {
            let mut row = 0.0;
            for (x, y) in a.row(i).iter().zip(b.row(i)) {
                row += (x - y).abs();
            }
            acc += row;
        }
        acc / a.n_samples() as f64
    };
    Ok(RecoveryReport {
        detection: detection_metrics(split, corrupted),
        l1_before: l1(noisy, truth),
        l1_after: l1(relabeled, truth),
    })
}
