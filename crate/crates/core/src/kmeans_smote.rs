//! Cluster-then-oversample: k-means clustering of the input space, an
//! imbalance-ratio filter selecting minority-dominated clusters, density
//! -based sampling weights favouring sparse minority regions, and
//! per-cluster SMOTE generation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kmeans::{fit_kmeans, ClusterModel, KmeansConfig};
use crate::matrix::{dist, FeatureMatrix};
use crate::oversamplers::{
    default_target_count, generate_rows, minority_neighbor_lists, NeighborCount, SyntheticBatch,
};
use crate::rng::{mix_str, rng_from_seed, rng_stream};

/// Exponent applied to a cluster's average minority distance when
/// computing its density; `Auto` resolves to the feature count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DensityExponent {
    Value(f64),
    Auto,
}

impl DensityExponent {
    pub fn resolve(&self, n_features: usize) -> f64 {
        match self {
            DensityExponent::Value(v) => *v,
            DensityExponent::Auto => n_features as f64,
        }
    }
}

impl fmt::Display for DensityExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityExponent::Value(v) => write!(f, "{v}"),
            DensityExponent::Auto => write!(f, "auto"),
        }
    }
}

impl std::str::FromStr for DensityExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(DensityExponent::Auto),
            other => other
                .parse::<f64>()
                .map(DensityExponent::Value)
                .map_err(|_| {
                    Error::InvalidParam(format!(
                        "density exponent must be a number or `auto`, got `{s}`"
                    ))
                }),
        }
    }
}

/// Parameters of the cluster-based oversampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmsParams {
    /// Number of clusters (≥ 1).
    pub k: usize,
    /// Imbalance ratio threshold; a cluster is kept when
    /// (majority+1)/(minority+1) is strictly below it. May be +∞.
    pub irt: f64,
    /// Neighbors for the per-cluster interpolation; 0 duplicates.
    pub knn: NeighborCount,
    /// Density exponent.
    pub de: DensityExponent,
    /// Synthetic rows to generate; `None` balances the classes exactly.
    pub n: Option<usize>,
    pub seed: u64,
    /// When no cluster passes the filter: `true` falls back to plain
    /// minority-wide SMOTE with a warning, `false` errors out.
    pub fallback: bool,
}

impl KmsParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParam("k must be at least 1".into()));
        }
        if self.irt.is_nan() || self.irt <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "imbalance ratio threshold must be positive, got {}",
                self.irt
            )));
        }
        if let DensityExponent::Value(v) = self.de {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "density exponent must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A cluster that passed the imbalance filter, annotated step by step with
/// its density statistics, sampling weight, and synthetic-row quota.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilteredCluster {
    pub cluster_id: usize,
    pub minority_idx: Vec<usize>,
    pub majority_idx: Vec<usize>,
    /// (majority + 1) / (minority + 1).
    pub imbalance_ratio: f64,
    /// Mean pairwise Euclidean distance among minority members (NaN until
    /// the weighting step; single-member clusters borrow the mean of the
    /// other clusters' values).
    pub avg_minority_distance: f64,
    /// exp(`log_sparsity`); may overflow to +∞ for extreme exponents —
    /// weight computation always goes through the log domain.
    pub sparsity_factor: f64,
    /// de·ln(avgDistance) − ln(minorityCount).
    pub log_sparsity: f64,
    /// Share of the synthetic budget; the weights of one filtering sum
    /// to 1.
    pub sampling_weight: f64,
    pub quota: usize,
}

/// Select the clusters eligible for oversampling: strictly more minority
/// presence than `irt` allows, by the smoothed ratio
/// (majority+1)/(minority+1). Clusters without a single minority member
/// cannot seed synthetic rows and are excluded regardless of their ratio.
pub fn filter_clusters(model: &ClusterModel, d: &Dataset, irt: f64) -> Vec<FilteredCluster> {
    debug_assert_eq!(model.assignments.len(), d.n_rows());
    let mut minority_of = vec![Vec::new(); model.k];
    let mut majority_of = vec![Vec::new(); model.k];
    for (row, &cluster) in model.assignments.iter().enumerate() {
        if d.labels[row] {
            minority_of[cluster].push(row);
        } else {
            majority_of[cluster].push(row);
        }
    }
    let mut filtered = Vec::new();
    for cluster_id in 0..model.k {
        let minority_idx = std::mem::take(&mut minority_of[cluster_id]);
        let majority_idx = std::mem::take(&mut majority_of[cluster_id]);
        let ratio = (majority_idx.len() + 1) as f64 / (minority_idx.len() + 1) as f64;
        if !minority_idx.is_empty() && ratio < irt {
            filtered.push(FilteredCluster {
                cluster_id,
                minority_idx,
                majority_idx,
                imbalance_ratio: ratio,
                avg_minority_distance: f64::NAN,
                sparsity_factor: f64::NAN,
                log_sparsity: f64::NAN,
                sampling_weight: f64::NAN,
                quota: 0,
            });
        }
    }
    filtered
}

/// Mean pairwise Euclidean distance among the given rows (requires ≥ 2).
fn mean_pairwise_distance(features: &FeatureMatrix, rows: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &a) in rows.iter().enumerate() {
        for &b in &rows[i + 1..] {
            total += dist(features.row(a), features.row(b));
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Assign each filtered cluster its share of the synthetic budget.
///
/// Density is minorityCount / avgDistance^de and the sampling weight is the
/// normalized reciprocal (sparsity), so sparse clusters draw more samples.
/// The exponentiation runs in the log domain with a log-sum-exp
/// normalization: avgDistance^de overflows f64 for large exponents while
/// the normalized weights stay perfectly representable.
pub fn sampling_weights(
    mut clusters: Vec<FilteredCluster>,
    d: &Dataset,
    de: DensityExponent,
) -> Vec<FilteredCluster> {
    if clusters.is_empty() {
        return clusters;
    }
    let de_eff = de.resolve(d.n_features());

    let multi_avgs: Vec<f64> = clusters
        .iter()
        .filter(|c| c.minority_idx.len() >= 2)
        .map(|c| mean_pairwise_distance(&d.features, &c.minority_idx))
        .collect();
    // Single-member clusters have no pairwise distances; they borrow the
    // mean of the other clusters' averages (or a neutral 1.0 when every
    // cluster is single).
    let single_stand_in = if multi_avgs.is_empty() {
        1.0
    } else {
        multi_avgs.iter().sum::<f64>() / multi_avgs.len() as f64
    };

    let mut multi_iter = multi_avgs.into_iter();
    for c in clusters.iter_mut() {
        let avg = if c.minority_idx.len() >= 2 {
            multi_iter.next().expect("one average per multi-member cluster")
        } else {
            single_stand_in
        };
        c.avg_minority_distance = avg;
        // Guard against log(0) when every minority member coincides.
        let safe_avg = avg.max(1e-12);
        c.log_sparsity = de_eff * safe_avg.ln() - (c.minority_idx.len() as f64).ln();
        c.sparsity_factor = c.log_sparsity.exp();
    }

    let max_ls = clusters
        .iter()
        .map(|c| c.log_sparsity)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = clusters
        .iter()
        .map(|c| (c.log_sparsity - max_ls).exp())
        .sum();
    for c in clusters.iter_mut() {
        c.sampling_weight = (c.log_sparsity - max_ls).exp() / total;
    }
    clusters
}

/// Split `n` synthetic rows over the clusters proportionally to their
/// sampling weights, with exact conservation: each cluster gets the floor
/// of its ideal share and the leftover units go to the largest fractional
/// remainders (ties favour the sparser cluster, then the lower id).
pub fn allocate_quotas(mut clusters: Vec<FilteredCluster>, n: usize) -> Vec<FilteredCluster> {
    if clusters.is_empty() {
        return clusters;
    }
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(clusters.len());
    let mut assigned = 0usize;
    for (pos, c) in clusters.iter_mut().enumerate() {
        let ideal = n as f64 * c.sampling_weight;
        let floor = ideal.floor() as usize;
        c.quota = floor;
        assigned += floor;
        remainders.push((pos, ideal - floor as f64));
    }
    let mut leftover = n - assigned;
    remainders.sort_by(|&(ia, ra), &(ib, rb)| {
        rb.total_cmp(&ra)
            .then(clusters[ib].log_sparsity.total_cmp(&clusters[ia].log_sparsity))
            .then(clusters[ia].cluster_id.cmp(&clusters[ib].cluster_id))
    });
    for &(pos, _) in remainders.iter() {
        if leftover == 0 {
            break;
        }
        clusters[pos].quota += 1;
        leftover -= 1;
    }
    debug_assert_eq!(clusters.iter().map(|c| c.quota).sum::<usize>(), n);
    clusters
}

/// Full output of a cluster-based oversampling run.
#[derive(Debug, Clone)]
pub struct KmsOutcome {
    pub batch: SyntheticBatch,
    /// The filtered clusters with weights and quotas (empty on fallback).
    pub clusters: Vec<FilteredCluster>,
    pub model: ClusterModel,
}

/// Run the full pipeline — cluster, filter, weight, allocate, generate —
/// and return just the synthetic batch.
pub fn kmeans_smote(d: &Dataset, p: &KmsParams) -> Result<SyntheticBatch> {
    kmeans_smote_with_details(d, p).map(|outcome| outcome.batch)
}

/// As [`kmeans_smote`], returning the per-cluster audit trail and the
/// fitted clustering as well.
pub fn kmeans_smote_with_details(d: &Dataset, p: &KmsParams) -> Result<KmsOutcome> {
    p.validate()?;
    // Clustering consumes its own derived stream so generation streams
    // stay aligned with the plain-SMOTE draw order.
    let clustering_seed = mix_str(p.seed, "clustering", &[]);
    let model = fit_kmeans(&d.features, p.k, clustering_seed, &KmeansConfig::default())?;
    kmeans_smote_with_model(d, model, p)
}

/// Run filtering, weighting, and generation against an already fitted
/// clustering of `d` (the model must assign every row of `d`).
pub fn kmeans_smote_with_model(
    d: &Dataset,
    model: ClusterModel,
    p: &KmsParams,
) -> Result<KmsOutcome> {
    p.validate()?;
    if model.assignments.len() != d.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: d.n_rows(),
            got: model.assignments.len(),
        });
    }
    let n = p.n.unwrap_or_else(|| default_target_count(&d.class_stats()));

    let filtered = filter_clusters(&model, d, p.irt);
    if filtered.is_empty() {
        if !p.fallback {
            return Err(Error::NoMinorityCluster { k: p.k, irt: p.irt });
        }
        // Fallback: minority-wide interpolation on the root stream, i.e.
        // exactly the plain-SMOTE generation law.
        let minority = d.minority_indices();
        let lists = minority_neighbor_lists(&d.features, &minority, p.knn)?;
        let mut rng = rng_from_seed(p.seed);
        let (samples, parents) = generate_rows(&d.features, &minority, &lists, None, n, &mut rng);
        return Ok(KmsOutcome {
            batch: SyntheticBatch {
                method: "kmeans-smote".into(),
                seed: p.seed,
                samples,
                parents,
                clusters: None,
                warnings: vec![format!(
                    "no cluster passed the imbalance filter (k={}, irt={}); \
                     fell back to minority-wide interpolation",
                    p.k, p.irt
                )],
            },
            clusters: Vec::new(),
            model,
        });
    }

    let weighted = sampling_weights(filtered, d, p.de);
    let clusters = allocate_quotas(weighted, n);

    let mut samples = FeatureMatrix::zeros(0, d.n_features());
    let mut parents = Vec::with_capacity(n);
    let mut sources = Vec::with_capacity(n);
    for c in &clusters {
        // Each cluster generates on its own stream of the master seed, so
        // per-cluster output is independent of every other cluster.
        let mut rng = rng_stream(p.seed, c.cluster_id as u64);
        let lists = minority_neighbor_lists(&d.features, &c.minority_idx, p.knn)?;
        let (cluster_samples, cluster_parents) =
            generate_rows(&d.features, &c.minority_idx, &lists, None, c.quota, &mut rng);
        samples.append_rows(&cluster_samples);
        parents.extend(cluster_parents);
        sources.extend(std::iter::repeat(c.cluster_id).take(c.quota));
    }

    Ok(KmsOutcome {
        batch: SyntheticBatch {
            method: "kmeans-smote".into(),
            seed: p.seed,
            samples,
            parents,
            clusters: Some(sources),
            warnings: Vec::new(),
        },
        clusters,
        model,
    })
}
