//! Lloyd's k-means with k-means++ seeding.
//!
//! Deterministic given (data, k, seed): seeding consumes a seeded stream,
//! assignment breaks distance ties toward the lowest cluster index, and the
//! final assignment pass re-labels every point against the converged
//! centroids so stored assignments always agree with `predict_cluster`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sq_dist, FeatureMatrix};
use crate::rng::rng_from_seed;

/// Iteration controls. Defaults: 300 iterations, tolerance 1e-4 on the
/// largest centroid displacement per update.
#[derive(Debug, Clone, Copy)]
pub struct KmeansConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

/// A fitted k-means model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: FeatureMatrix,
    /// Cluster index of each training row, consistent with the centroids.
    pub assignments: Vec<usize>,
    /// Sum of squared distances from each row to its centroid.
    pub inertia: f64,
    /// Inertia recorded after every assignment pass; non-increasing.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Index of the centroid nearest to `point`; ties go to the lowest index.
pub fn predict_cluster(model: &ClusterModel, point: &[f64]) -> Result<usize> {
    if point.len() != model.centroids.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: model.centroids.n_cols(),
            got: point.len(),
        });
    }
    Ok(nearest(&model.centroids, point).0)
}

fn nearest(centroids: &FeatureMatrix, point: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter_rows().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: first center uniform, each further center drawn with
/// probability proportional to its squared distance to the nearest chosen
/// center. Degenerate data (all remaining distances zero) falls back to a
/// uniform draw.
fn seed_centroids(
    features: &FeatureMatrix,
    k: usize,
    rng: &mut impl Rng,
) -> FeatureMatrix {
    let n = features.n_rows();
    let mut centroids = FeatureMatrix::zeros(k, features.n_cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(features.row(first));

    let mut best_sq = vec![f64::INFINITY; n];
    for j in 1..k {
        let prev = centroids.row(j - 1).to_vec();
        for (i, row) in features.iter_rows().enumerate() {
            let d = sq_dist(row, &prev);
            if d < best_sq[i] {
                best_sq[i] = d;
            }
        }
        let total: f64 = best_sq.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in best_sq.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(j).copy_from_slice(features.row(pick));
    }
    centroids
}

/// Move each empty cluster's centroid onto the point currently farthest
/// from its own centroid, so the next assignment pass repopulates it.
/// Points already donated in this round are skipped.
fn repair_empty_clusters(
    features: &FeatureMatrix,
    centroids: &mut FeatureMatrix,
    assignments: &[usize],
    counts: &[usize],
) {
    let mut donated = vec![false; features.n_rows()];
    for j in 0..counts.len() {
        if counts[j] > 0 {
            continue;
        }
        let mut far_idx = None;
        let mut far_d = -1.0;
        for (i, row) in features.iter_rows().enumerate() {
            if donated[i] {
                continue;
            }
            let d = sq_dist(row, centroids.row(assignments[i]));
            if d > far_d {
                far_d = d;
                far_idx = Some(i);
            }
        }
        if let Some(i) = far_idx {
            centroids.row_mut(j).copy_from_slice(features.row(i));
            donated[i] = true;
        }
    }
}

/// Fit k-means on `features` with `k` clusters.
pub fn fit_kmeans(
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    config: &KmeansConfig,
) -> Result<ClusterModel> {
    let n = features.n_rows();
    if k == 0 {
        return Err(Error::InvalidParam("k-means needs k >= 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParam("k-means needs at least one row".into()));
    }
    if k > n {
        return Err(Error::InvalidParam(format!(
            "k-means with k={k} on only {n} rows"
        )));
    }
    let cols = features.n_cols();
    let mut rng = rng_from_seed(seed);
    let mut centroids = seed_centroids(features, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut inertia_history = Vec::new();

    for _ in 0..config.max_iter {
        iterations += 1;
        let mut reassigned = false;
        let mut pass_inertia = 0.0;
        for (i, row) in features.iter_rows().enumerate() {
            let (j, d) = nearest(&centroids, row);
            if assignments[i] != j {
                reassigned = true;
                assignments[i] = j;
            }
            pass_inertia += d;
        }
        inertia_history.push(pass_inertia);
        if !reassigned {
            converged = true;
            break;
        }
        let mut sums = vec![0.0f64; k * cols];
        let mut counts = vec![0usize; k];
        for (i, row) in features.iter_rows().enumerate() {
            let j = assignments[i];
            counts[j] += 1;
            for (s, v) in sums[j * cols..(j + 1) * cols].iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut new_centroids = FeatureMatrix::zeros(k, cols);
        for j in 0..k {
            let dst = new_centroids.row_mut(j);
            if counts[j] > 0 {
                for (d, s) in dst.iter_mut().zip(&sums[j * cols..(j + 1) * cols]) {
                    *d = s / counts[j] as f64;
                }
            } else {
                dst.copy_from_slice(centroids.row(j));
            }
        }
        repair_empty_clusters(features, &mut new_centroids, &assignments, &counts);
        let shift = (0..k)
            .map(|j| sq_dist(centroids.row(j), new_centroids.row(j)).sqrt())
            .fold(0.0f64, f64::max);
        centroids = new_centroids;
        if shift <= config.tol {
            converged = true;
            break;
        }
    }

    // Final labelling against the converged centroids keeps stored
    // assignments and predictions mutually consistent.
    let mut inertia = 0.0;
    for (i, row) in features.iter_rows().enumerate() {
        let (j, d) = nearest(&centroids, row);
        assignments[i] = j;
        inertia += d;
    }
    inertia_history.push(inertia);

    Ok(ClusterModel {
        k,
        centroids,
        assignments,
        inertia,
        inertia_history,
        iterations,
        converged,
    })
}
