//! Baseline oversamplers — random duplication, SMOTE, borderline-SMOTE —
//! plus the interpolation and nearest-neighbor kernels shared with
//! k-means SMOTE.
//!
//! All samplers follow one draw-order contract per synthetic row: one draw
//! selects the seed parent; when interpolation applies, a second draw picks
//! the neighbor and a third the interpolation weight. Duplication consumes
//! only the first draw. Two samplers seeded onto the same stream with the
//! same candidate sets therefore produce bit-identical batches.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ClassStats, Dataset};
use crate::error::{Error, Result};
use crate::io_util::atomic_write;
use crate::matrix::{dist, FeatureMatrix};
use crate::rng::rng_from_seed;

/// A neighbor-count parameter: a fixed `k` or "all available".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NeighborCount {
    Exact(usize),
    All,
}

impl NeighborCount {
    /// The usable neighbor count given `available` candidates; fixed
    /// values clamp downward.
    pub fn effective(&self, available: usize) -> usize {
        match self {
            NeighborCount::Exact(k) => (*k).min(available),
            NeighborCount::All => available,
        }
    }
}

impl fmt::Display for NeighborCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeighborCount::Exact(k) => write!(f, "{k}"),
            NeighborCount::All => write!(f, "all"),
        }
    }
}

impl FromStr for NeighborCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" | "inf" => Ok(NeighborCount::All),
            other => other
                .parse::<usize>()
                .map(NeighborCount::Exact)
                .map_err(|_| {
                    Error::InvalidParam(format!(
                        "neighbor count must be an integer or `all`, got `{s}`"
                    ))
                }),
        }
    }
}

/// Exact Euclidean nearest neighbors per query: each list is ordered by
/// (distance, index) ascending, so ties resolve toward the lower index.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl NeighborTable {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// (point index, distance) pairs for query `q`, nearest first.
    pub fn list(&self, q: usize) -> &[(usize, f64)] {
        &self.neighbors[q]
    }

    pub fn indices(&self, q: usize) -> Vec<usize> {
        self.neighbors[q].iter().map(|&(i, _)| i).collect()
    }
}

fn neighbor_list(
    points: &FeatureMatrix,
    query: &[f64],
    skip: Option<usize>,
    k_eff: usize,
) -> Vec<(usize, f64)> {
    let mut candidates: Vec<(usize, f64)> = points
        .iter_rows()
        .enumerate()
        .filter(|(j, _)| Some(*j) != skip)
        .map(|(j, row)| (j, dist(query, row)))
        .collect();
    let by_dist_then_index =
        |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k_eff < candidates.len() {
        candidates.select_nth_unstable_by(k_eff, by_dist_then_index);
        candidates.truncate(k_eff);
    }
    candidates.sort_unstable_by(by_dist_then_index);
    candidates
}

/// Nearest neighbors of every query row among `points` (no exclusion; use
/// [`knn_table_self`] when the queries are the points themselves).
pub fn knn_table(
    points: &FeatureMatrix,
    queries: &FeatureMatrix,
    knn: NeighborCount,
) -> Result<NeighborTable> {
    if points.n_rows() == 0 {
        return Err(Error::InvalidParam("neighbor search over no points".into()));
    }
    if knn == NeighborCount::Exact(0) {
        return Err(Error::InvalidParam(
            "neighbor search needs knn >= 1 or `all`".into(),
        ));
    }
    if points.n_cols() != queries.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: points.n_cols(),
            got: queries.n_cols(),
        });
    }
    let k_eff = knn.effective(points.n_rows());
    let neighbors = queries
        .iter_rows()
        .map(|q| neighbor_list(points, q, None, k_eff))
        .collect();
    Ok(NeighborTable { neighbors })
}

/// Nearest neighbors of every point among the other points of the same
/// set: point `i` never appears in its own list, duplicates of it do.
pub fn knn_table_self(points: &FeatureMatrix, knn: NeighborCount) -> Result<NeighborTable> {
    if points.n_rows() == 0 {
        return Err(Error::InvalidParam("neighbor search over no points".into()));
    }
    if knn == NeighborCount::Exact(0) {
        return Err(Error::InvalidParam(
            "neighbor search needs knn >= 1 or `all`".into(),
        ));
    }
    let k_eff = knn.effective(points.n_rows().saturating_sub(1));
    let neighbors = points
        .iter_rows()
        .enumerate()
        .map(|(i, q)| neighbor_list(points, q, Some(i), k_eff))
        .collect();
    Ok(NeighborTable { neighbors })
}

/// Linear interpolation `a + w·(b − a)` with `w` in [0, 1].
pub fn interpolate(a: &[f64], b: &[f64], w: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidParam(format!(
            "interpolation weight must lie in [0, 1], got {w}"
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect())
}

/// A batch of generated minority rows with full provenance.
///
/// `parents` holds, per generated row, the source-dataset row indices of
/// the two interpolation endpoints (equal indices for exact duplication).
/// `clusters` is set when generation was cluster-restricted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticBatch {
    pub method: String,
    pub seed: u64,
    pub samples: FeatureMatrix,
    pub parents: Vec<(usize, usize)>,
    pub clusters: Option<Vec<usize>>,
    pub warnings: Vec<String>,
}

impl SyntheticBatch {
    pub fn n_rows(&self) -> usize {
        self.samples.n_rows()
    }
}

/// Core generation loop shared by every interpolating sampler.
///
/// Per generated row: draw `a` uniformly from `parent_rows`; if `a`'s
/// neighbor list is empty, emit an exact copy (one draw consumed); else
/// draw a neighbor `b` uniformly and a weight `w` uniform on [0, 1), and
/// emit `a + w(b−a)`. When `halve_w_for` marks `b`, `w` is halved, keeping
/// the sample on the `a`-side half of the segment.
pub(crate) fn generate_rows(
    features: &FeatureMatrix,
    parent_rows: &[usize],
    neighbor_lists: &[Vec<usize>],
    halve_w_for: Option<&[bool]>,
    quota: usize,
    rng: &mut ChaCha8Rng,
) -> (FeatureMatrix, Vec<(usize, usize)>) {
    debug_assert_eq!(parent_rows.len(), neighbor_lists.len());
    debug_assert!(!parent_rows.is_empty() || quota == 0);
    let cols = features.n_cols();
    let mut samples = Vec::with_capacity(quota * cols);
    let mut parents = Vec::with_capacity(quota);
    for _ in 0..quota {
        let a_ord = rng.random_range(0..parent_rows.len());
        let a = parent_rows[a_ord];
        let nbrs = &neighbor_lists[a_ord];
        if nbrs.is_empty() {
            samples.extend_from_slice(features.row(a));
            parents.push((a, a));
            continue;
        }
        let b = nbrs[rng.random_range(0..nbrs.len())];
        let mut w = rng.random::<f64>();
        if halve_w_for.is_some_and(|flags| flags[b]) {
            w *= 0.5;
        }
        let row_a = features.row(a);
        let row_b = features.row(b);
        samples.extend((0..cols).map(|j| row_a[j] + w * (row_b[j] - row_a[j])));
        parents.push((a, b));
    }
    (
        FeatureMatrix::from_flat(quota, cols, samples),
        parents,
    )
}

/// The target count that balances the classes exactly.
pub fn default_target_count(stats: &ClassStats) -> usize {
    stats.majority - stats.minority
}

/// Duplicate `n` uniformly drawn minority rows.
pub fn random_oversample(d: &Dataset, n: usize, seed: u64) -> Result<SyntheticBatch> {
    let minority = d.minority_indices();
    let lists = vec![Vec::new(); minority.len()];
    let mut rng = rng_from_seed(seed);
    let (samples, parents) = generate_rows(&d.features, &minority, &lists, None, n, &mut rng);
    Ok(SyntheticBatch {
        method: "random".into(),
        seed,
        samples,
        parents,
        clusters: None,
        warnings: Vec::new(),
    })
}

/// Per-parent global neighbor lists for SMOTE over a minority subset:
/// nearest minority neighbors, self excluded, clamped to `knn`.
/// Empty lists (duplication) when fewer than two members or `knn` = 0.
pub(crate) fn minority_neighbor_lists(
    features: &FeatureMatrix,
    minority_rows: &[usize],
    knn: NeighborCount,
) -> Result<Vec<Vec<usize>>> {
    let count = minority_rows.len();
    let k_eff = knn.effective(count.saturating_sub(1));
    if k_eff == 0 {
        return Ok(vec![Vec::new(); count]);
    }
    let subset = features.gather(minority_rows);
    let table = knn_table_self(&subset, NeighborCount::Exact(k_eff))?;
    Ok((0..count)
        .map(|i| table.list(i).iter().map(|&(p, _)| minority_rows[p]).collect())
        .collect())
}

/// SMOTE: interpolate each of `n` synthetic rows between a random minority
/// row and one of its `knn` nearest minority neighbors. `knn` = 0
/// degenerates to duplication (the law of `random_oversample`).
pub fn smote(d: &Dataset, n: usize, knn: NeighborCount, seed: u64) -> Result<SyntheticBatch> {
    let minority = d.minority_indices();
    // A fixed positive knn cannot be honored with a single minority row;
    // `all` clamps to zero neighbors and degenerates to duplication.
    if minority.len() < 2 && matches!(knn, NeighborCount::Exact(k) if k >= 1) {
        return Err(Error::InvalidDataset(
            "interpolation needs at least 2 minority rows; \
             use duplication (knn = 0) instead"
                .into(),
        ));
    }
    let lists = minority_neighbor_lists(&d.features, &minority, knn)?;
    let mut rng = rng_from_seed(seed);
    let (samples, parents) = generate_rows(&d.features, &minority, &lists, None, n, &mut rng);
    Ok(SyntheticBatch {
        method: "smote".into(),
        seed,
        samples,
        parents,
        clusters: None,
        warnings: Vec::new(),
    })
}

/// The two borderline-SMOTE flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BorderlineVariant {
    One,
    Two,
}

impl fmt::Display for BorderlineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BorderlineVariant::One => write!(f, "1"),
            BorderlineVariant::Two => write!(f, "2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BorderClass {
    Noise,
    Danger,
    Safe,
}

/// Classify each minority row by the majority fraction `f` among its
/// `m_neighbors` nearest neighbors over both classes: all-majority
/// neighborhoods are NOISE, `0.5 <= f < 1` is DANGER, `f < 0.5` is SAFE.
fn classify_minority(
    d: &Dataset,
    minority_rows: &[usize],
    m_neighbors: usize,
) -> Result<Vec<BorderClass>> {
    let m_eff = m_neighbors.min(d.n_rows() - 1);
    let table = knn_table_self(&d.features, NeighborCount::Exact(m_eff))?;
    Ok(minority_rows
        .iter()
        .map(|&row| {
            let list = table.list(row);
            let majority = list.iter().filter(|&&(j, _)| !d.labels[j]).count();
            if majority == list.len() {
                BorderClass::Noise
            } else if 2 * majority >= list.len() {
                BorderClass::Danger
            } else {
                BorderClass::Safe
            }
        })
        .collect())
}

/// Borderline-SMOTE: generate only from minority rows in the DANGER zone
/// (majority-leaning neighborhoods), skipping NOISE and SAFE rows.
///
/// Variant 1 interpolates toward minority neighbors with `w` in [0, 1);
/// variant 2 draws neighbors from both classes and halves `w` when the
/// neighbor is majority, keeping such samples closer to the minority
/// parent. If no row qualifies as DANGER, the batch falls back to plain
/// SMOTE over the whole minority class and records a warning.
pub fn borderline_smote(
    d: &Dataset,
    n: usize,
    knn: usize,
    m_neighbors: usize,
    variant: BorderlineVariant,
    seed: u64,
) -> Result<SyntheticBatch> {
    if knn == 0 {
        return Err(Error::InvalidParam(
            "borderline interpolation needs knn >= 1".into(),
        ));
    }
    if m_neighbors == 0 {
        return Err(Error::InvalidParam(
            "neighborhood classification needs m_neighbors >= 1".into(),
        ));
    }
    let minority = d.minority_indices();
    if minority.len() < 2 {
        return Err(Error::InvalidDataset(
            "borderline interpolation needs at least 2 minority rows".into(),
        ));
    }
    let method = format!("borderline-smote{variant}");
    let mut warnings = Vec::new();

    let classes = classify_minority(d, &minority, m_neighbors)?;
    let danger: Vec<usize> = minority
        .iter()
        .zip(&classes)
        .filter(|&(_, c)| *c == BorderClass::Danger)
        .map(|(&row, _)| row)
        .collect();

    let (parent_rows, lists, halve): (Vec<usize>, Vec<Vec<usize>>, Option<Vec<bool>>) =
        if danger.is_empty() {
            warnings.push(
                "no minority row lies in the danger zone; fell back to plain \
                 interpolation over the whole minority class"
                    .into(),
            );
            let lists =
                minority_neighbor_lists(&d.features, &minority, NeighborCount::Exact(knn))?;
            (minority.clone(), lists, None)
        } else {
            match variant {
                BorderlineVariant::One => {
                    // Neighbor pool: the whole minority class.
                    let all_lists = minority_neighbor_lists(
                        &d.features,
                        &minority,
                        NeighborCount::Exact(knn),
                    )?;
                    let pos_of: std::collections::HashMap<usize, usize> = minority
                        .iter()
                        .enumerate()
                        .map(|(p, &row)| (row, p))
                        .collect();
                    let lists = danger.iter().map(|row| all_lists[pos_of[row]].clone()).collect();
                    (danger, lists, None)
                }
                BorderlineVariant::Two => {
                    // Neighbor pool: every other row of either class.
                    let k_eff = knn.min(d.n_rows() - 1);
                    let table = knn_table_self(&d.features, NeighborCount::Exact(k_eff))?;
                    let lists = danger
                        .iter()
                        .map(|&row| table.indices(row))
                        .collect();
                    let halve: Vec<bool> = d.labels.iter().map(|&l| !l).collect();
                    (danger, lists, Some(halve))
                }
            }
        };

    let mut rng = rng_from_seed(seed);
    let (samples, parents) = generate_rows(
        &d.features,
        &parent_rows,
        &lists,
        halve.as_deref(),
        n,
        &mut rng,
    );
    Ok(SyntheticBatch {
        method,
        seed,
        samples,
        parents,
        clusters: None,
        warnings,
    })
}

/// Write a batch audit trail as CSV: one row per synthetic sample with its
/// feature values, both parent row indices, the method label, and — when
/// cluster-restricted — the source cluster. Atomic write.
pub fn save_batch_csv(
    batch: &SyntheticBatch,
    feature_names: &[String],
    path: impl AsRef<std::path::Path>,
) -> Result<()> {
    if feature_names.len() != batch.samples.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: batch.samples.n_cols(),
            got: feature_names.len(),
        });
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = feature_names.to_vec();
    header.extend(["parentA".into(), "parentB".into(), "method".into()]);
    if batch.clusters.is_some() {
        header.push("cluster".into());
    }
    writer.write_record(&header)?;
    for (i, row) in batch.samples.iter_rows().enumerate() {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let (pa, pb) = batch.parents[i];
        record.push(pa.to_string());
        record.push(pb.to_string());
        record.push(batch.method.clone());
        if let Some(clusters) = &batch.clusters {
            record.push(clusters[i].to_string());
        }
        writer.write_record(&record)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidDataset(format!("csv buffer error: {e}")))?;
    atomic_write(path, &bytes)
}
