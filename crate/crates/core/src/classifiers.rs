//! The two downstream classifiers used to compare oversamplers: a
//! k-nearest-neighbour voter and an L2-regularized logistic regression
//! trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::oversamplers::{knn_table, NeighborCount};

/// Hyperparameters of the gradient-descent logistic regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty on the weights (the bias is unregularized).
    pub l2: f64,
    /// Stop when the gradient norm falls below this.
    pub tol: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            learning_rate: 0.1,
            l2: 1e-4,
            tol: 1e-6,
        }
    }
}

impl LogRegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::InvalidParam("max_epochs must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !self.l2.is_finite() || self.l2 < 0.0 {
            return Err(Error::InvalidParam(format!(
                "l2 penalty must be non-negative, got {}",
                self.l2
            )));
        }
        if !self.tol.is_finite() || self.tol < 0.0 {
            return Err(Error::InvalidParam(format!(
                "tolerance must be non-negative, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// A fitted classifier ready to score new rows.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    /// Lazy learner: keeps the training set and votes at query time.
    Knn {
        k: usize,
        features: FeatureMatrix,
        labels: Vec<bool>,
    },
    /// Logistic regression on internally standardized features.
    LogReg {
        weights: Vec<f64>,
        bias: f64,
        /// Per-feature training means used to standardize queries.
        means: Vec<f64>,
        /// Per-feature training standard deviations (0 replaced by 1).
        stds: Vec<f64>,
        /// Penalized mean log-loss at the start of each epoch.
        loss_history: Vec<f64>,
    },
}

/// Store the training set for k-nearest-neighbour voting; `k` must not
/// exceed the number of training rows.
pub fn fit_knn(train: &Dataset, k: usize) -> Result<TrainedModel> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be at least 1".into()));
    }
    if k > train.n_rows() {
        return Err(Error::InvalidParam(format!(
            "k = {} exceeds the {} training rows",
            k,
            train.n_rows()
        )));
    }
    Ok(TrainedModel::Knn {
        k,
        features: train.features.clone(),
        labels: train.labels.clone(),
    })
}

/// Numerically stable logistic function.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^t).
fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else if t < -30.0 {
        t.exp()
    } else {
        t.exp().ln_1p()
    }
}

/// Penalized mean log-loss and its analytic gradient at the given
/// parameters. Exposed so the gradient can be verified independently by
/// finite differences.
pub fn logreg_loss_and_gradient(
    features: &FeatureMatrix,
    labels: &[bool],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = features.n_rows() as f64;
    let m = features.n_cols();
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; m];
    let mut grad_b = 0.0;
    for (i, row) in features.iter_rows().enumerate() {
        let t = bias
            + row
                .iter()
                .zip(weights)
                .map(|(x, w)| x * w)
                .sum::<f64>();
        let y = if labels[i] { 1.0 } else { 0.0 };
        loss += softplus(t) - y * t;
        let residual = sigmoid(t) - y;
        for (g, x) in grad_w.iter_mut().zip(row) {
            *g += residual * x;
        }
        grad_b += residual;
    }
    loss /= n;
    grad_b /= n;
    let mut penalty = 0.0;
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
        penalty += w * w;
    }
    loss += 0.5 * l2 * penalty;
    (loss, grad_w, grad_b)
}

/// Column means and standard deviations of the training features, with
/// zero deviations replaced by 1 so constant columns standardize to 0.
fn standardization(features: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = features.n_rows() as f64;
    let m = features.n_cols();
    let mut means = vec![0.0; m];
    for row in features.iter_rows() {
        for (acc, x) in means.iter_mut().zip(row) {
            *acc += x;
        }
    }
    for acc in means.iter_mut() {
        *acc /= n;
    }
    let mut vars = vec![0.0; m];
    for row in features.iter_rows() {
        for ((acc, x), mu) in vars.iter_mut().zip(row).zip(&means) {
            let d = x - mu;
            *acc += d * d;
        }
    }
    let stds = vars
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s == 0.0 {
                1.0
            } else {
                s
            }
        })
        .collect();
    (means, stds)
}

fn standardize(features: &FeatureMatrix, means: &[f64], stds: &[f64]) -> FeatureMatrix {
    let mut z = features.clone();
    for r in 0..z.n_rows() {
        let row = z.row_mut(r);
        for ((x, mu), sd) in row.iter_mut().zip(means).zip(stds) {
            *x = (*x - mu) / sd;
        }
    }
    z
}

/// Fit the logistic regression: standardize using training statistics,
/// start from zero parameters, and run full-batch gradient descent until
/// the gradient norm drops below `tol` or the epoch budget runs out.
pub fn fit_logreg(train: &Dataset, cfg: &LogRegConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let (means, stds) = standardization(&train.features);
    let z = standardize(&train.features, &means, &stds);
    let mut weights = vec![0.0; z.n_cols()];
    let mut bias = 0.0;
    let mut loss_history = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let (loss, grad_w, grad_b) =
            logreg_loss_and_gradient(&z, &train.labels, &weights, bias, cfg.l2);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        loss_history.push(loss);
        let grad_norm = (grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
        if grad_norm < cfg.tol {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= cfg.learning_rate * g;
        }
        bias -= cfg.learning_rate * grad_b;
    }

    Ok(TrainedModel::LogReg {
        weights,
        bias,
        means,
        stds,
        loss_history,
    })
}

/// Minority-class scores in [0, 1] for each query row.
pub fn predict_scores(model: &TrainedModel, queries: &FeatureMatrix) -> Result<Vec<f64>> {
    match model {
        TrainedModel::Knn {
            k,
            features,
            labels,
        } => {
            let table = knn_table(features, queries, NeighborCount::Exact(*k))?;
            Ok((0..queries.n_rows())
                .map(|q| {
                    let votes = table
                        .list(q)
                        .iter()
                        .filter(|&&(idx, _)| labels[idx])
                        .count();
                    votes as f64 / *k as f64
                })
                .collect())
        }
        TrainedModel::LogReg {
            weights,
            bias,
            means,
            stds,
            ..
        } => {
            if queries.n_cols() != weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: weights.len(),
                    got: queries.n_cols(),
                });
            }
            let z = standardize(queries, means, stds);
            Ok(z.iter_rows()
                .map(|row| {
                    let t = bias
                        + row
                            .iter()
                            .zip(weights)
                            .map(|(x, w)| x * w)
                            .sum::<f64>();
                    sigmoid(t)
                })
                .collect())
        }
    }
}

/// Hard decisions at the fixed threshold: minority only when the score
/// strictly exceeds 0.5.
pub fn predict(model: &TrainedModel, queries: &FeatureMatrix) -> Result<Vec<bool>> {
    Ok(predict_scores(model, queries)?
        .into_iter()
        .map(|s| s > 0.5)
        .collect())
}
