//! Imbalance-aware evaluation metrics: confusion counts, per-class rates,
//! F-measure, geometric mean, and area under the precision-recall curve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary confusion counts with the minority class as positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn actual_positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn actual_negatives(&self) -> usize {
        self.tn + self.fp
    }
}

/// Count prediction outcomes against the ground truth (`true` = minority).
///
/// The truth must contain at least one member of each class, otherwise the
/// per-class rates downstream would divide by zero.
pub fn confusion(predictions: &[bool], truth: &[bool]) -> Result<ConfusionMatrix> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predictions.len(),
        });
    }
    let mut cm = ConfusionMatrix {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p, t) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    if cm.actual_positives() == 0 || cm.actual_negatives() == 0 {
        return Err(Error::InvalidDataset(
            "ground truth must contain both classes".into(),
        ));
    }
    Ok(cm)
}

/// The scalar rates derived from a confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicRates {
    pub accuracy: f64,
    /// Exactly 1 − accuracy.
    pub error_rate: f64,
    /// True positive rate (recall on the minority class).
    pub sensitivity: f64,
    /// True negative rate.
    pub specificity: f64,
    /// 0.0 when nothing was predicted positive; see `precision_defined`.
    pub precision: f64,
    pub precision_defined: bool,
}

/// Derive the basic rates; requires both classes present in the truth,
/// which [`confusion`] already guarantees.
pub fn basic_rates(cm: &ConfusionMatrix) -> BasicRates {
    let total = cm.total() as f64;
    let accuracy = (cm.tp + cm.tn) as f64 / total;
    let predicted_positive = cm.tp + cm.fp;
    let (precision, precision_defined) = if predicted_positive == 0 {
        (0.0, false)
    } else {
        (cm.tp as f64 / predicted_positive as f64, true)
    };
    BasicRates {
        accuracy,
        error_rate: 1.0 - accuracy,
        sensitivity: cm.tp as f64 / cm.actual_positives() as f64,
        specificity: cm.tn as f64 / cm.actual_negatives() as f64,
        precision,
        precision_defined,
    }
}

/// Weighted harmonic mean of precision and sensitivity:
/// (1 + α) · p · s / (α · p + s), with the convention 0 when the
/// denominator vanishes. α = 1 gives the classic F1.
pub fn f_measure(cm: &ConfusionMatrix, alpha: f64) -> f64 {
    let r = basic_rates(cm);
    let denom = alpha * r.precision + r.sensitivity;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + alpha) * r.precision * r.sensitivity / denom
    }
}

pub fn f1(cm: &ConfusionMatrix) -> f64 {
    f_measure(cm, 1.0)
}

/// Geometric mean of sensitivity and specificity.
pub fn gmean(cm: &ConfusionMatrix) -> f64 {
    let r = basic_rates(cm);
    (r.sensitivity * r.specificity).sqrt()
}

/// A validated set of scores (minority-class probabilities in [0, 1])
/// paired with ground-truth labels containing both classes.
#[derive(Debug, Clone)]
pub struct ScoredPredictions {
    scores: Vec<f64>,
    truth: Vec<bool>,
}

impl ScoredPredictions {
    pub fn new(scores: Vec<f64>, truth: Vec<bool>) -> Result<Self> {
        if scores.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: scores.len(),
            });
        }
        if !truth.iter().any(|&t| t) || !truth.iter().any(|&t| !t) {
            return Err(Error::InvalidDataset(
                "ground truth must contain both classes".into(),
            ));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite() || **s < 0.0 || **s > 1.0) {
            return Err(Error::InvalidParam(format!(
                "scores must lie in [0, 1], got {bad}"
            )));
        }
        Ok(Self { scores, truth })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn truth(&self) -> &[bool] {
        &self.truth
    }

    /// Binary decisions at the fixed 0.5 threshold: positive only when the
    /// score strictly exceeds it, so an uninformative 0.5 predicts the
    /// majority class.
    pub fn decisions(&self) -> Vec<bool> {
        self.scores.iter().map(|&s| s > 0.5).collect()
    }
}

/// Area under the precision-recall curve, computed as step-wise average
/// precision: rank by descending score, walk the distinct score values,
/// and accumulate (R_i − R_{i−1}) · P_i. Tied scores form one step, so
/// the result is independent of the order of tied rows.
pub fn auprc(sp: &ScoredPredictions) -> f64 {
    let n = sp.scores.len();
    let total_pos = sp.truth.iter().filter(|&&t| t).count() as f64;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sp.scores[b].total_cmp(&sp.scores[a]).then(a.cmp(&b)));

    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < n {
        let group_score = sp.scores[order[i]];
        while i < n && sp.scores[order[i]] == group_score {
            if sp.truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / total_pos;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Convenience wrapper: validate and score in one call.
pub fn auprc_from(scores: Vec<f64>, truth: Vec<bool>) -> Result<f64> {
    Ok(auprc(&ScoredPredictions::new(scores, truth)?))
}
