//! Comparative evaluation protocol: repeated stratified cross-validation
//! with in-fold oversampling, grid search over oversampler × classifier
//! combinations, best-over-grid selection per metric, mean ranking across
//! datasets and repetitions, and the Friedman significance test.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{fit_knn, fit_logreg, predict_scores, LogRegConfig};
use crate::data::{stratified_kfold, Dataset, Fold};
use crate::error::{Error, Result};
use crate::io_util::atomic_write;
use crate::kmeans::{fit_kmeans, ClusterModel, KmeansConfig};
use crate::kmeans_smote::{kmeans_smote_with_model, DensityExponent, KmsParams};
use crate::matrix::FeatureMatrix;
use crate::metrics::{auprc, confusion, f1, gmean, ScoredPredictions};
use crate::oversamplers::{
    borderline_smote, default_target_count, knn_table, random_oversample, smote,
    BorderlineVariant, NeighborCount,
};
use crate::rng::mix_str;
use crate::stat::chi2_sf;

/// The three imbalance-aware scores reported for every cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    Auprc,
    F1,
    Gmean,
}

/// Fixed reporting order of the metrics.
pub const METRICS: [Metric; 3] = [Metric::Auprc, Metric::F1, Metric::Gmean];

impl Metric {
    pub fn label(&self) -> &'static str {
        match self {
            Metric::Auprc => "auprc",
            Metric::F1 => "f1",
            Metric::Gmean => "gmean",
        }
    }

    pub fn compute(&self, sp: &ScoredPredictions) -> Result<f64> {
        match self {
            Metric::Auprc => Ok(auprc(sp)),
            Metric::F1 => Ok(f1(&confusion(&sp.decisions(), sp.truth())?)),
            Metric::Gmean => Ok(gmean(&confusion(&sp.decisions(), sp.truth())?)),
        }
    }
}

/// One point of the oversampler grid.
#[derive(Debug, Clone, PartialEq)]
pub enum OversamplerSpec {
    /// Baseline: the training split passes through unchanged.
    None,
    /// Duplicate random minority rows until the classes balance.
    Random,
    Smote {
        knn: NeighborCount,
    },
    Borderline {
        variant: BorderlineVariant,
        knn: usize,
    },
    KmeansSmote {
        k: usize,
        irt: f64,
        knn: NeighborCount,
        de: DensityExponent,
    },
}

impl OversamplerSpec {
    /// Family name used for ranking; hyperparameter variants of one
    /// method share a family.
    pub fn family(&self) -> &'static str {
        match self {
            OversamplerSpec::None => "none",
            OversamplerSpec::Random => "random",
            OversamplerSpec::Smote { .. } => "smote",
            OversamplerSpec::Borderline {
                variant: BorderlineVariant::One,
                ..
            } => "borderline-smote1",
            OversamplerSpec::Borderline {
                variant: BorderlineVariant::Two,
                ..
            } => "borderline-smote2",
            OversamplerSpec::KmeansSmote { .. } => "kmeans-smote",
        }
    }

    /// Unique, stable label; also the string that seeds this combo's
    /// random substreams, so adding grid points never changes the cells
    /// of existing ones.
    pub fn label(&self) -> String {
        match self {
            OversamplerSpec::None => "none".into(),
            OversamplerSpec::Random => "random".into(),
            OversamplerSpec::Smote { knn } => format!("smote(knn={knn})"),
            OversamplerSpec::Borderline { variant, knn } => {
                format!("borderline-smote{variant}(knn={knn})")
            }
            OversamplerSpec::KmeansSmote { k, irt, knn, de } => {
                format!("kmeans-smote(k={k},irt={irt},knn={knn},de={de})")
            }
        }
    }

    /// The cluster count when this is the cluster-based method.
    pub fn kms_k(&self) -> Option<usize> {
        match self {
            OversamplerSpec::KmeansSmote { k, .. } => Some(*k),
            _ => None,
        }
    }

    /// Oversample `train` to exact class balance. The cluster-based
    /// method reuses `model` when one is supplied (the evaluation loop
    /// fits one clustering per fold and cluster count).
    pub fn apply(
        &self,
        train: &Dataset,
        seed: u64,
        model: Option<&ClusterModel>,
    ) -> Result<Dataset> {
        let n = default_target_count(&train.class_stats());
        let batch = match self {
            OversamplerSpec::None => return Ok(train.clone()),
            OversamplerSpec::Random => random_oversample(train, n, seed)?,
            OversamplerSpec::Smote { knn } => smote(train, n, *knn, seed)?,
            OversamplerSpec::Borderline { variant, knn } => {
                // mNeighbors defaults to knn when not set separately.
                borderline_smote(train, n, *knn, *knn, *variant, seed)?
            }
            OversamplerSpec::KmeansSmote { k, irt, knn, de } => {
                let p = KmsParams {
                    k: *k,
                    irt: *irt,
                    knn: *knn,
                    de: *de,
                    n: Some(n),
                    seed,
                    fallback: false,
                };
                match model {
                    Some(m) => kmeans_smote_with_model(train, m.clone(), &p)?.batch,
                    None => crate::kmeans_smote::kmeans_smote(train, &p)?,
                }
            }
        };
        Ok(train.with_synthetic_rows(&batch.samples))
    }
}

/// One point of the classifier grid. The last two are diagnostic
/// scorers used to validate the harness itself: a clairvoyant oracle
/// that reads the ground truth, and a membership probe that flags test
/// rows appearing verbatim in the training set (a leakage detector).
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSpec {
    Knn { k: usize },
    LogReg,
    Clairvoyant,
    MembershipProbe,
}

impl ClassifierSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ClassifierSpec::Knn { .. } => "knn",
            ClassifierSpec::LogReg => "logreg",
            ClassifierSpec::Clairvoyant => "clairvoyant",
            ClassifierSpec::MembershipProbe => "membership-probe",
        }
    }

    pub fn label(&self) -> String {
        match self {
            ClassifierSpec::Knn { k } => format!("knn(k={k})"),
            ClassifierSpec::LogReg => "logreg".into(),
            ClassifierSpec::Clairvoyant => "clairvoyant".into(),
            ClassifierSpec::MembershipProbe => "membership-probe".into(),
        }
    }

    /// Fit on `train` and score the test rows.
    pub fn score(
        &self,
        train: &Dataset,
        test: &FeatureMatrix,
        test_truth: &[bool],
    ) -> Result<Vec<f64>> {
        match self {
            ClassifierSpec::Knn { k } => predict_scores(&fit_knn(train, *k)?, test),
            ClassifierSpec::LogReg => {
                predict_scores(&fit_logreg(train, &LogRegConfig::default())?, test)
            }
            ClassifierSpec::Clairvoyant => Ok(test_truth
                .iter()
                .map(|&t| if t { 1.0 } else { 0.0 })
                .collect()),
            ClassifierSpec::MembershipProbe => Ok(test
                .iter_rows()
                .map(|q| {
                    let hit = train.features.iter_rows().any(|row| row == q);
                    if hit {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()),
        }
    }
}

/// Score several neighbour counts from a single distance table: the
/// k-nearest lists are sorted by (distance, index), so each smaller k is
/// a prefix of the largest. Equivalent to fitting each k separately.
fn knn_scores_for_ks(
    train: &Dataset,
    test: &FeatureMatrix,
    ks: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let k_max = *ks.iter().max().expect("at least one k");
    if k_max == 0 || k_max > train.n_rows() {
        return Err(Error::InvalidParam(format!(
            "k = {k_max} outside 1..={} training rows",
            train.n_rows()
        )));
    }
    let table = knn_table(&train.features, test, NeighborCount::Exact(k_max))?;
    let mut all = Vec::with_capacity(ks.len());
    for &k in ks {
        let scores = (0..test.n_rows())
            .map(|q| {
                let votes = table.list(q)[..k]
                    .iter()
                    .filter(|&&(idx, _)| train.labels[idx])
                    .count();
                votes as f64 / k as f64
            })
            .collect();
        all.push(scores);
    }
    Ok(all)
}

/// The full search space of one experiment.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub oversamplers: Vec<OversamplerSpec>,
    pub classifiers: Vec<ClassifierSpec>,
}

impl GridSpec {
    fn smote_family_grids(oversamplers: &mut Vec<OversamplerSpec>) {
        oversamplers.push(OversamplerSpec::Random);
        for knn in [3, 5, 20] {
            oversamplers.push(OversamplerSpec::Smote {
                knn: NeighborCount::Exact(knn),
            });
        }
        for variant in [BorderlineVariant::One, BorderlineVariant::Two] {
            for knn in [3, 5, 20] {
                oversamplers.push(OversamplerSpec::Borderline { variant, knn });
            }
        }
    }

    fn kms_grid(oversamplers: &mut Vec<OversamplerSpec>, ks: &[usize]) {
        for &k in ks {
            for knn in [
                NeighborCount::Exact(3),
                NeighborCount::Exact(5),
                NeighborCount::Exact(20),
                NeighborCount::All,
            ] {
                for irt in [1.0, f64::INFINITY] {
                    for de in [
                        DensityExponent::Value(0.0),
                        DensityExponent::Value(2.0),
                        DensityExponent::Auto,
                    ] {
                        oversamplers.push(OversamplerSpec::KmeansSmote { k, irt, knn, de });
                    }
                }
            }
        }
    }

    fn default_classifiers() -> Vec<ClassifierSpec> {
        vec![
            ClassifierSpec::Knn { k: 3 },
            ClassifierSpec::Knn { k: 5 },
            ClassifierSpec::Knn { k: 8 },
            ClassifierSpec::LogReg,
        ]
    }

    /// The full search space: every oversampler family at every
    /// hyperparameter setting, cluster counts up to 500.
    pub fn full() -> Self {
        let mut oversamplers = vec![OversamplerSpec::None];
        Self::smote_family_grids(&mut oversamplers);
        Self::kms_grid(&mut oversamplers, &[2, 20, 50, 100, 250, 500]);
        GridSpec {
            oversamplers,
            classifiers: Self::default_classifiers(),
        }
    }

    /// Desk-scale variant: cluster counts capped at 50.
    pub fn reduced() -> Self {
        let mut oversamplers = vec![OversamplerSpec::None];
        Self::smote_family_grids(&mut oversamplers);
        Self::kms_grid(&mut oversamplers, &[2, 20, 50]);
        GridSpec {
            oversamplers,
            classifiers: Self::default_classifiers(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.oversamplers.is_empty() || self.classifiers.is_empty() {
            return Err(Error::InvalidParam(
                "both grids must be nonempty".into(),
            ));
        }
        if !self
            .oversamplers
            .iter()
            .any(|o| matches!(o, OversamplerSpec::None))
        {
            return Err(Error::InvalidParam(
                "the `none` baseline must be part of the oversampler grid".into(),
            ));
        }
        let mut labels: Vec<String> = self.oversamplers.iter().map(|o| o.label()).collect();
        labels.extend(self.classifiers.iter().map(|c| c.label()));
        let unique: std::collections::HashSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::InvalidParam("duplicate grid entries".into()));
        }
        Ok(())
    }
}

/// Per-classifier metric values of one evaluated cell, in [`METRICS`]
/// order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClfScores {
    pub clf: String,
    pub metrics: [f64; 3],
}

/// Result of one (dataset, repeat, fold, oversampler combo) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CellOutcome {
    Scores(Vec<ClfScores>),
    Skipped(String),
    Failed(String),
}

/// On-disk cache of evaluated cells, keyed by the cell's random
/// substream id (plus the human-readable combo label).
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct CellCache {
    pub cells: BTreeMap<String, CellOutcome>,
}

impl CellCache {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &serde_json::to_vec(self)?)
    }
}

fn cache_key(cell_seed: u64, os_label: &str) -> String {
    format!("{cell_seed:016x}:{os_label}")
}

/// True when a cached outcome can serve the current classifier grid.
fn outcome_covers(outcome: &CellOutcome, classifiers: &[ClassifierSpec]) -> bool {
    match outcome {
        CellOutcome::Scores(scores) => classifiers
            .iter()
            .all(|c| scores.iter().any(|s| s.clf == c.label())),
        _ => true,
    }
}

/// Reorder cached per-classifier scores into current grid order.
fn align_outcome(outcome: CellOutcome, classifiers: &[ClassifierSpec]) -> CellOutcome {
    match outcome {
        CellOutcome::Scores(scores) => CellOutcome::Scores(
            classifiers
                .iter()
                .map(|c| {
                    let label = c.label();
                    scores
                        .iter()
                        .find(|s| s.clf == label)
                        .expect("coverage checked before alignment")
                        .clone()
                })
                .collect(),
        ),
        other => other,
    }
}

/// Evaluate every requested oversampler combo on one train/test split.
fn evaluate_fold(
    ds: &Dataset,
    ds_seed: u64,
    r: usize,
    f: usize,
    fold: &Fold,
    grid: &GridSpec,
    combos: &[usize],
) -> Vec<(usize, CellOutcome)> {
    let train = ds.subset(&fold.train, ds.name.clone());
    let test_x = ds.features.gather(&fold.test);
    let test_y: Vec<bool> = fold.test.iter().map(|&i| ds.labels[i]).collect();

    // One clustering per cluster count, shared by every combo using it.
    let mut kms_models: HashMap<usize, std::result::Result<ClusterModel, String>> = HashMap::new();

    let knn_ks: Vec<usize> = grid
        .classifiers
        .iter()
        .filter_map(|c| match c {
            ClassifierSpec::Knn { k } => Some(*k),
            _ => None,
        })
        .collect();

    combos
        .iter()
        .map(|&ci| {
            let spec = &grid.oversamplers[ci];
            (
                ci,
                evaluate_cell(
                    ds, &train, &test_x, &test_y, ds_seed, r, f, spec, grid, &knn_ks,
                    &mut kms_models,
                ),
            )
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn evaluate_cell(
    ds: &Dataset,
    train: &Dataset,
    test_x: &FeatureMatrix,
    test_y: &[bool],
    ds_seed: u64,
    r: usize,
    f: usize,
    spec: &OversamplerSpec,
    grid: &GridSpec,
    knn_ks: &[usize],
    kms_models: &mut HashMap<usize, std::result::Result<ClusterModel, String>>,
) -> CellOutcome {
    let mut model: Option<&ClusterModel> = None;
    if let Some(k) = spec.kms_k() {
        if ds.n_rows() < k {
            return CellOutcome::Skipped(format!(
                "dataset has {} rows, fewer than k = {k}",
                ds.n_rows()
            ));
        }
        if train.n_rows() < k {
            return CellOutcome::Skipped(format!(
                "training split has {} rows, fewer than k = {k}",
                train.n_rows()
            ));
        }
        let entry = kms_models.entry(k).or_insert_with(|| {
            let seed = mix_str(ds_seed, "kmeans", &[r as u64, f as u64, k as u64]);
            fit_kmeans(&train.features, k, seed, &KmeansConfig::default())
                .map_err(|e| e.to_string())
        });
        match entry {
            Ok(m) => model = Some(m),
            Err(e) => return CellOutcome::Failed(e.clone()),
        }
    }

    let cell_seed = mix_str(ds_seed, &spec.label(), &[r as u64, f as u64]);
    let oversampled = match spec.apply(train, cell_seed, model) {
        Ok(d) => d,
        Err(e) => return CellOutcome::Failed(e.to_string()),
    };

    // The KNN classifiers share one distance table per cell.
    let shared_knn = if knn_ks.is_empty() {
        Vec::new()
    } else {
        match knn_scores_for_ks(&oversampled, test_x, knn_ks) {
            Ok(s) => s,
            Err(e) => return CellOutcome::Failed(e.to_string()),
        }
    };

    let mut results = Vec::with_capacity(grid.classifiers.len());
    let mut knn_slot = 0usize;
    for clf in &grid.classifiers {
        let scores = match clf {
            ClassifierSpec::Knn { .. } => {
                let s = shared_knn[knn_slot].clone();
                knn_slot += 1;
                Ok(s)
            }
            other => other.score(&oversampled, test_x, test_y),
        };
        let scores = match scores {
            Ok(s) => s,
            Err(e) => return CellOutcome::Failed(e.to_string()),
        };
        let sp = match ScoredPredictions::new(scores, test_y.to_vec()) {
            Ok(sp) => sp,
            Err(e) => return CellOutcome::Failed(e.to_string()),
        };
        let mut metrics = [0.0; 3];
        for (slot, metric) in metrics.iter_mut().zip(METRICS.iter()) {
            match metric.compute(&sp) {
                Ok(v) => *slot = v,
                Err(e) => return CellOutcome::Failed(e.to_string()),
            }
        }
        results.push(ClfScores {
            clf: clf.label(),
            metrics,
        });
    }
    CellOutcome::Scores(results)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub rows: usize,
    pub features: usize,
    pub minority: usize,
    pub majority: usize,
    pub imbalance_ratio: f64,
}

/// Aggregated scores of one fully valid (dataset, oversampler combo,
/// classifier, metric) cell across every repeat and fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub dataset: String,
    pub oversampler: String,
    pub oversampler_family: String,
    pub classifier: String,
    pub classifier_family: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation across all repeat × fold values.
    pub std: f64,
    /// Fold-mean per repeat.
    pub per_repeat: Vec<f64>,
}

/// The grid winner for one (dataset, oversampler family, classifier
/// family, metric).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestCell {
    pub dataset: String,
    pub oversampler_family: String,
    pub classifier_family: String,
    pub metric: String,
    pub oversampler: String,
    pub classifier: String,
    pub mean: f64,
    pub std: f64,
    pub per_repeat: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    /// p < 0.05.
    pub rejected: bool,
    pub methods: usize,
    pub blocks: usize,
}

/// Mean ranks of the oversampler families under one classifier family
/// and metric, over (dataset × repeat) blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankTable {
    pub classifier_family: String,
    pub metric: String,
    pub oversampler_families: Vec<String>,
    pub mean_ranks: Vec<f64>,
    pub blocks: usize,
    pub friedman: Option<FriedmanResult>,
    /// Datasets without a valid grid winner for every family.
    pub excluded_datasets: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipRecord {
    pub dataset: String,
    pub oversampler: String,
    pub reason: String,
    pub cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRecord {
    pub dataset: String,
    pub oversampler: String,
    pub error: String,
    pub cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub oversamplers: Vec<String>,
    pub classifiers: Vec<String>,
    pub datasets: Vec<DatasetSummary>,
    pub cells: Vec<CellResult>,
    pub best: Vec<BestCell>,
    pub rankings: Vec<RankTable>,
    pub skipped: Vec<SkipRecord>,
    pub failures: Vec<FailureRecord>,
}

/// Competition ranks of scores where higher is better: the best value
/// receives rank 1 and tied values share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the average 1-based rank.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Rank each block of method scores and average the ranks per method.
/// Returns the per-block rank vectors and the mean ranks.
pub fn mean_ranking(score_blocks: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if score_blocks.is_empty() {
        return Err(Error::InvalidParam("at least one block required".into()));
    }
    let k = score_blocks[0].len();
    if k < 2 {
        return Err(Error::InvalidParam("at least two methods required".into()));
    }
    if score_blocks.iter().any(|b| b.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: score_blocks.iter().find(|b| b.len() != k).unwrap().len(),
        });
    }
    let ranks: Vec<Vec<f64>> = score_blocks.iter().map(|b| average_ranks(b)).collect();
    let mut means = vec![0.0; k];
    for block in &ranks {
        for (m, r) in means.iter_mut().zip(block) {
            *m += r;
        }
    }
    for m in means.iter_mut() {
        *m /= ranks.len() as f64;
    }
    Ok((ranks, means))
}

/// Friedman test over rank blocks (each block: the ranks of the k
/// methods in one dataset × repetition):
/// χ²_F = 12N/(k(k+1)) · Σ_j R̄_j² − 3N(k+1), with k−1 degrees of
/// freedom. Requires k ≥ 3 methods and N ≥ 2 blocks.
pub fn friedman_test(rank_blocks: &[Vec<f64>]) -> Result<FriedmanResult> {
    let n = rank_blocks.len();
    if n < 2 {
        return Err(Error::InvalidParam(
            "the Friedman test needs at least 2 blocks".into(),
        ));
    }
    let k = rank_blocks[0].len();
    if k < 3 {
        return Err(Error::InvalidParam(
            "the Friedman test needs at least 3 methods".into(),
        ));
    }
    if rank_blocks.iter().any(|b| b.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: rank_blocks.iter().find(|b| b.len() != k).unwrap().len(),
        });
    }
    let mut mean_ranks = vec![0.0; k];
    for block in rank_blocks {
        for (m, r) in mean_ranks.iter_mut().zip(block) {
            *m += r;
        }
    }
    for m in mean_ranks.iter_mut() {
        *m /= n as f64;
    }
    let sum_sq: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let nf = n as f64;
    let kf = k as f64;
    let statistic = 12.0 * nf / (kf * (kf + 1.0)) * sum_sq - 3.0 * nf * (kf + 1.0);
    let df = kf - 1.0;
    let p_value = chi2_sf(statistic, df);
    Ok(FriedmanResult {
        statistic,
        degrees_of_freedom: df,
        p_value,
        rejected: p_value < 0.05,
        methods: k,
        blocks: n,
    })
}

/// Run the full protocol. Each (dataset, repeat, fold, combo) cell is an
/// independent task seeded from the master seed, so results are
/// identical regardless of worker count. A cache, when provided, serves
/// previously computed cells and absorbs new ones.
pub fn run_experiment(
    datasets: &[Dataset],
    grid: &GridSpec,
    folds: usize,
    repeats: usize,
    seed: u64,
    mut cache: Option<&mut CellCache>,
) -> Result<EvalReport> {
    grid.validate()?;
    if datasets.is_empty() {
        return Err(Error::InvalidParam("at least one dataset required".into()));
    }
    {
        let mut names: Vec<&str> = datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != datasets.len() {
            return Err(Error::InvalidParam(
                "dataset names must be unique (they seed the substreams)".into(),
            ));
        }
    }

    let ds_seeds: Vec<u64> = datasets.iter().map(|d| mix_str(seed, &d.name, &[])).collect();
    let plans: Vec<_> = datasets
        .iter()
        .zip(&ds_seeds)
        .map(|(d, &s)| stratified_kfold(d, folds, repeats, mix_str(s, "folds", &[])))
        .collect::<Result<Vec<_>>>()?;

    let n_combos = grid.oversamplers.len();
    let combo_labels: Vec<String> = grid.oversamplers.iter().map(|o| o.label()).collect();

    // Seeds for every cell, indexed [ds][combo][r * folds + f].
    let cell_seeds: Vec<Vec<Vec<u64>>> = (0..datasets.len())
        .map(|di| {
            (0..n_combos)
                .map(|ci| {
                    (0..repeats * folds)
                        .map(|cell| {
                            let (r, f) = (cell / folds, cell % folds);
                            mix_str(ds_seeds[di], &combo_labels[ci], &[r as u64, f as u64])
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    struct Task {
        ds: usize,
        r: usize,
        f: usize,
        combos: Vec<usize>,
    }

    let computed: Vec<(usize, usize, usize, usize, CellOutcome)>;
    {
        let snapshot: Option<&CellCache> = cache.as_deref();
        let mut tasks = Vec::new();
        for ds in 0..datasets.len() {
            for r in 0..repeats {
                for f in 0..folds {
                    let combos: Vec<usize> = (0..n_combos)
                        .filter(|&ci| {
                            snapshot
                                .and_then(|c| {
                                    c.cells.get(&cache_key(
                                        cell_seeds[ds][ci][r * folds + f],
                                        &combo_labels[ci],
                                    ))
                                })
                                .map_or(true, |o| !outcome_covers(o, &grid.classifiers))
                        })
                        .collect();
                    if !combos.is_empty() {
                        tasks.push(Task { ds, r, f, combos });
                    }
                }
            }
        }
        computed = tasks
            .par_iter()
            .flat_map(|t| {
                let fold = &plans[t.ds].folds[t.r][t.f];
                evaluate_fold(
                    &datasets[t.ds],
                    ds_seeds[t.ds],
                    t.r,
                    t.f,
                    fold,
                    grid,
                    &t.combos,
                )
                .into_iter()
                .map(|(ci, outcome)| (t.ds, ci, t.r, t.f, outcome))
                .collect::<Vec<_>>()
            })
            .collect();
    }

    // Assemble the full outcome table from fresh and cached cells.
    let mut fresh: HashMap<(usize, usize, usize, usize), CellOutcome> = computed
        .iter()
        .map(|(ds, ci, r, f, o)| ((*ds, *ci, *r, *f), o.clone()))
        .collect();
    let snapshot: Option<&CellCache> = cache.as_deref();
    let mut table: Vec<Vec<Vec<CellOutcome>>> = Vec::with_capacity(datasets.len());
    for ds in 0..datasets.len() {
        let mut per_combo = Vec::with_capacity(n_combos);
        for ci in 0..n_combos {
            let mut cells = Vec::with_capacity(repeats * folds);
            for cell in 0..repeats * folds {
                let (r, f) = (cell / folds, cell % folds);
                let outcome = fresh.remove(&(ds, ci, r, f)).unwrap_or_else(|| {
                    let key = cache_key(cell_seeds[ds][ci][cell], &combo_labels[ci]);
                    snapshot
                        .expect("cell must be cached when not computed")
                        .cells
                        .get(&key)
                        .cloned()
                        .expect("cell must be cached when not computed")
                });
                cells.push(align_outcome(outcome, &grid.classifiers));
            }
            per_combo.push(cells);
        }
        table.push(per_combo);
    }

    if let Some(c) = cache.as_mut() {
        for (ds, ci, r, f, outcome) in computed {
            let key = cache_key(cell_seeds[ds][ci][r * folds + f], &combo_labels[ci]);
            c.cells.insert(key, outcome);
        }
    }

    Ok(aggregate(datasets, grid, folds, repeats, seed, &table))
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn aggregate(
    datasets: &[Dataset],
    grid: &GridSpec,
    folds: usize,
    repeats: usize,
    seed: u64,
    table: &[Vec<Vec<CellOutcome>>],
) -> EvalReport {
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    let mut failures = Vec::new();

    for (di, ds) in datasets.iter().enumerate() {
        for (ci, spec) in grid.oversamplers.iter().enumerate() {
            let outcomes = &table[di][ci];
            let n_skipped = outcomes
                .iter()
                .filter(|o| matches!(o, CellOutcome::Skipped(_)))
                .count();
            let n_failed = outcomes
                .iter()
                .filter(|o| matches!(o, CellOutcome::Failed(_)))
                .count();
            if n_skipped > 0 {
                let reason = outcomes
                    .iter()
                    .find_map(|o| match o {
                        CellOutcome::Skipped(s) => Some(s.clone()),
                        _ => None,
                    })
                    .unwrap();
                skipped.push(SkipRecord {
                    dataset: ds.name.clone(),
                    oversampler: spec.label(),
                    reason,
                    cells: n_skipped,
                });
                continue;
            }
            if n_failed > 0 {
                let error = outcomes
                    .iter()
                    .find_map(|o| match o {
                        CellOutcome::Failed(e) => Some(e.clone()),
                        _ => None,
                    })
                    .unwrap();
                failures.push(FailureRecord {
                    dataset: ds.name.clone(),
                    oversampler: spec.label(),
                    error,
                    cells: n_failed,
                });
                continue;
            }
            // Every fold scored: aggregate per classifier and metric.
            for (clf_idx, clf) in grid.classifiers.iter().enumerate() {
                for (mi, metric) in METRICS.iter().enumerate() {
                    let values: Vec<f64> = outcomes
                        .iter()
                        .map(|o| match o {
                            CellOutcome::Scores(s) => s[clf_idx].metrics[mi],
                            _ => unreachable!("filtered above"),
                        })
                        .collect();
                    let mean = values.iter().sum::<f64>() / values.len() as f64;
                    let per_repeat: Vec<f64> = (0..repeats)
                        .map(|r| {
                            values[r * folds..(r + 1) * folds].iter().sum::<f64>()
                                / folds as f64
                        })
                        .collect();
                    cells.push(CellResult {
                        dataset: ds.name.clone(),
                        oversampler: spec.label(),
                        oversampler_family: spec.family().into(),
                        classifier: clf.label(),
                        classifier_family: clf.family().into(),
                        metric: metric.label().into(),
                        mean,
                        std: sample_std(&values, mean),
                        per_repeat,
                    });
                }
            }
        }
    }

    // Grid winner per (dataset, oversampler family, classifier family,
    // metric): highest mean, ties broken by labels for determinism.
    let mut best: Vec<BestCell> = Vec::new();
    let mut by_group: HashMap<(String, String, String, String), Vec<&CellResult>> = HashMap::new();
    for cell in &cells {
        by_group
            .entry((
                cell.dataset.clone(),
                cell.oversampler_family.clone(),
                cell.classifier_family.clone(),
                cell.metric.clone(),
            ))
            .or_default()
            .push(cell);
    }
    for candidates in by_group.values_mut() {
        candidates.sort_by(|a, b| {
            b.mean
                .total_cmp(&a.mean)
                .then_with(|| a.oversampler.cmp(&b.oversampler))
                .then_with(|| a.classifier.cmp(&b.classifier))
        });
        let w = candidates[0];
        best.push(BestCell {
            dataset: w.dataset.clone(),
            oversampler_family: w.oversampler_family.clone(),
            classifier_family: w.classifier_family.clone(),
            metric: w.metric.clone(),
            oversampler: w.oversampler.clone(),
            classifier: w.classifier.clone(),
            mean: w.mean,
            std: w.std,
            per_repeat: w.per_repeat.clone(),
        });
    }
    // Deterministic report order.
    best.sort_by(|a, b| {
        a.dataset
            .cmp(&b.dataset)
            .then_with(|| a.classifier_family.cmp(&b.classifier_family))
            .then_with(|| a.metric.cmp(&b.metric))
            .then_with(|| a.oversampler_family.cmp(&b.oversampler_family))
    });

    // Rankings per (classifier family, metric) over the oversampler
    // families, one block per (dataset, repeat).
    let mut os_families: Vec<String> = Vec::new();
    for o in &grid.oversamplers {
        if !os_families.iter().any(|f| f == o.family()) {
            os_families.push(o.family().into());
        }
    }
    let mut clf_families: Vec<String> = Vec::new();
    for c in &grid.classifiers {
        if !clf_families.iter().any(|f| f == c.family()) {
            clf_families.push(c.family().into());
        }
    }

    let best_lookup: HashMap<(&str, &str, &str, &str), &BestCell> = best
        .iter()
        .map(|b| {
            (
                (
                    b.dataset.as_str(),
                    b.oversampler_family.as_str(),
                    b.classifier_family.as_str(),
                    b.metric.as_str(),
                ),
                b,
            )
        })
        .collect();

    let mut rankings = Vec::new();
    // A single family has nothing to be ranked against.
    let rankable_families: &[String] = if os_families.len() >= 2 {
        &os_families
    } else {
        &[]
    };
    for cf in &clf_families {
        if rankable_families.is_empty() {
            break;
        }
        for metric in METRICS.iter() {
            let mut excluded = Vec::new();
            let mut blocks: Vec<Vec<f64>> = Vec::new();
            for ds in datasets {
                let winners: Option<Vec<&BestCell>> = os_families
                    .iter()
                    .map(|fam| {
                        best_lookup
                            .get(&(
                                ds.name.as_str(),
                                fam.as_str(),
                                cf.as_str(),
                                metric.label(),
                            ))
                            .copied()
                    })
                    .collect();
                match winners {
                    Some(ws) => {
                        for r in 0..repeats {
                            blocks.push(ws.iter().map(|w| w.per_repeat[r]).collect());
                        }
                    }
                    None => excluded.push(ds.name.clone()),
                }
            }
            if blocks.is_empty() {
                continue;
            }
            let (rank_blocks, mean_ranks) =
                mean_ranking(&blocks).expect("blocks are rectangular by construction");
            let friedman = if os_families.len() >= 3 && rank_blocks.len() >= 2 {
                Some(friedman_test(&rank_blocks).expect("preconditions checked"))
            } else {
                None
            };
            rankings.push(RankTable {
                classifier_family: cf.clone(),
                metric: metric.label().into(),
                oversampler_families: os_families.clone(),
                mean_ranks,
                blocks: blocks.len(),
                friedman,
                excluded_datasets: excluded,
            });
        }
    }

    EvalReport {
        folds,
        repeats,
        seed,
        oversamplers: grid.oversamplers.iter().map(|o| o.label()).collect(),
        classifiers: grid.classifiers.iter().map(|c| c.label()).collect(),
        datasets: datasets
            .iter()
            .map(|d| {
                let stats = d.class_stats();
                DatasetSummary {
                    name: d.name.clone(),
                    rows: d.n_rows(),
                    features: d.n_features(),
                    minority: stats.minority,
                    majority: stats.majority,
                    imbalance_ratio: stats.imbalance_ratio,
                }
            })
            .collect(),
        cells,
        best,
        rankings,
        skipped,
        failures,
    }
}

/// Write `report.json`, `cells.csv`, and `ranks.csv` into `dir`
/// atomically. Numbers use the shortest round-trip decimal form, so the
/// files are byte-identical across reruns of a deterministic experiment.
pub fn write_report_files(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    atomic_write(&dir.join("report.json"), &serde_json::to_vec_pretty(report)?)?;

    let mut cells = csv::Writer::from_writer(Vec::new());
    let mut header = vec![
        "dataset".to_string(),
        "oversampler".into(),
        "oversampler_family".into(),
        "classifier".into(),
        "classifier_family".into(),
        "metric".into(),
        "mean".into(),
        "std".into(),
    ];
    header.extend((0..report.repeats).map(|r| format!("repeat{r}")));
    cells.write_record(&header)?;
    for c in &report.cells {
        let mut record = vec![
            c.dataset.clone(),
            c.oversampler.clone(),
            c.oversampler_family.clone(),
            c.classifier.clone(),
            c.classifier_family.clone(),
            c.metric.clone(),
            c.mean.to_string(),
            c.std.to_string(),
        ];
        record.extend(c.per_repeat.iter().map(|v| v.to_string()));
        cells.write_record(&record)?;
    }
    let bytes = cells
        .into_inner()
        .map_err(|e| Error::InvalidParam(format!("csv buffer: {e}")))?;
    atomic_write(&dir.join("cells.csv"), &bytes)?;

    write_ranks_csv(report, &dir.join("ranks.csv"))
}

/// Write just the rank tables of a report as CSV, atomically.
pub fn write_ranks_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut ranks = csv::Writer::from_writer(Vec::new());
    ranks.write_record([
        "classifier",
        "metric",
        "oversampler",
        "mean_rank",
        "blocks",
        "friedman_statistic",
        "friedman_p",
        "rejected",
    ])?;
    for table in &report.rankings {
        for (fam, rank) in table.oversampler_families.iter().zip(&table.mean_ranks) {
            let (stat, p, rej) = match &table.friedman {
                Some(fr) => (
                    fr.statistic.to_string(),
                    fr.p_value.to_string(),
                    fr.rejected.to_string(),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            ranks.write_record([
                table.classifier_family.as_str(),
                table.metric.as_str(),
                fam.as_str(),
                &rank.to_string(),
                &table.blocks.to_string(),
                &stat,
                &p,
                &rej,
            ])?;
        }
    }
    let bytes = ranks
        .into_inner()
        .map_err(|e| Error::InvalidParam(format!("csv buffer: {e}")))?;
    atomic_write(path, &bytes)
}
