//! Binary-labelled datasets: CSV ingestion, class bookkeeping, stratified
//! cross-validation folds, controlled undersampling, and Gaussian-blob
//! synthesis for fixtures.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io_util::atomic_write;
use crate::matrix::FeatureMatrix;
use crate::rng::{rng_from_seed, rng_stream};

/// A dataset with real-valued features and a binary class label.
///
/// `true` marks the minority (positive) class; the minority is never larger
/// than the majority. The original label strings are retained so files
/// written back out keep their vocabulary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub features: FeatureMatrix,
    pub labels: Vec<bool>,
    pub feature_names: Vec<String>,
    pub label_name: String,
    pub minority_name: String,
    pub majority_name: String,
}

/// Per-class counts and the majority:minority imbalance ratio (always ≥ 1
/// for a valid dataset).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub minority: usize,
    pub majority: usize,
    pub imbalance_ratio: f64,
}

/// Train/test index pair for one fold. Both lists are ascending.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// All folds of a repeated stratified k-fold split.
///
/// `folds[r][f]` is fold `f` of repeat `r`. Within a repeat the test sets
/// partition the row indices, and each test set preserves the class
/// proportions of the full dataset to within one instance per class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_rows: usize,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub folds: Vec<Vec<Fold>>,
}

/// Which column of a CSV holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// The last column (default).
    Last,
    /// A column referenced by header name, or — if no header matches and
    /// the string is numeric — by zero-based position.
    NameOrIndex(String),
}

impl Dataset {
    /// Construct and validate: non-empty, both classes present, minority no
    /// larger than majority, all features finite.
    pub fn new(
        name: impl Into<String>,
        features: FeatureMatrix,
        labels: Vec<bool>,
        feature_names: Vec<String>,
        label_name: impl Into<String>,
        minority_name: impl Into<String>,
        majority_name: impl Into<String>,
    ) -> Result<Self> {
        if features.n_rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.n_rows(),
                got: labels.len(),
            });
        }
        if feature_names.len() != features.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: features.n_cols(),
                got: feature_names.len(),
            });
        }
        let ds = Self {
            name: name.into(),
            features,
            labels,
            feature_names,
            label_name: label_name.into(),
            minority_name: minority_name.into(),
            majority_name: majority_name.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.features.n_rows() == 0 {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        if self.features.n_cols() == 0 {
            return Err(Error::InvalidDataset("dataset has no feature columns".into()));
        }
        let stats = self.class_stats();
        if stats.minority == 0 || stats.majority == 0 {
            return Err(Error::InvalidDataset(
                "both classes must be present".into(),
            ));
        }
        if stats.minority > stats.majority {
            return Err(Error::InvalidDataset(format!(
                "class `{}` marked minority but outnumbers `{}` ({} vs {})",
                self.minority_name, self.majority_name, stats.minority, stats.majority
            )));
        }
        for (i, row) in self.features.iter_rows().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "non-finite feature value at row {i}, column {}",
                    self.feature_names[j]
                )));
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn minority_indices(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i]).collect()
    }

    pub fn majority_indices(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| !self.labels[i]).collect()
    }

    pub fn class_stats(&self) -> ClassStats {
        let minority = self.labels.iter().filter(|&&l| l).count();
        let majority = self.labels.len() - minority;
        ClassStats {
            minority,
            majority,
            imbalance_ratio: majority as f64 / minority as f64,
        }
    }

    /// New dataset holding the listed rows, in the given order. The split
    /// is not re-validated: a subset of a valid dataset may be locally
    /// unbalanced and that is fine for fold handling.
    pub fn subset(&self, rows: &[usize], name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            features: self.features.gather(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
            minority_name: self.minority_name.clone(),
            majority_name: self.majority_name.clone(),
        }
    }

    /// Append synthetic rows, all labelled minority.
    pub fn with_synthetic_rows(&self, synthetic: &FeatureMatrix) -> Dataset {
        assert_eq!(synthetic.n_cols(), self.n_features());
        let mut features = self.features.clone();
        features.append_rows(synthetic);
        let mut labels = self.labels.clone();
        labels.extend(std::iter::repeat(true).take(synthetic.n_rows()));
        Dataset {
            name: self.name.clone(),
            features,
            labels,
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
            minority_name: self.minority_name.clone(),
            majority_name: self.majority_name.clone(),
        }
    }
}

fn resolve_label_column(headers: &[String], column: &LabelColumn) -> Result<usize> {
    match column {
        LabelColumn::Last => Ok(headers.len() - 1),
        LabelColumn::NameOrIndex(s) => {
            if let Some(i) = headers.iter().position(|h| h == s) {
                return Ok(i);
            }
            if let Ok(i) = s.parse::<usize>() {
                if i < headers.len() {
                    return Ok(i);
                }
                return Err(Error::InvalidDataset(format!(
                    "label column index {i} out of range for {} columns",
                    headers.len()
                )));
            }
            Err(Error::InvalidDataset(format!(
                "label column `{s}` not found"
            )))
        }
    }
}

/// Load a dataset from CSV: comma separator, one header row, `.` decimal
/// point, UTF-8.
///
/// With exactly two label values the minority class is the less frequent
/// one (ties broken toward the lexicographically smaller value). Datasets
/// with more label values require an explicit `minority_label`; the other
/// classes merge into a single majority (one-vs-rest).
pub fn load_csv(
    path: impl AsRef<Path>,
    name: impl Into<String>,
    label_column: &LabelColumn,
    minority_label: Option<&str>,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() {
        return Err(Error::InvalidDataset("empty header row".into()));
    }
    let label_idx = resolve_label_column(&headers, label_column)?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::InvalidDataset("dataset has no feature columns".into()));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: row_no + 1,
                column: String::new(),
                detail: format!(
                    "expected {} fields, found {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                raw_labels.push(field.to_owned());
                continue;
            }
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: row_no + 1,
                column: headers[col].clone(),
                detail: format!("`{field}` is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: row_no + 1,
                    column: headers[col].clone(),
                    detail: "non-finite value".into(),
                });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidDataset("dataset has no rows".into()));
    }

    let mut classes: Vec<String> = raw_labels.clone();
    classes.sort();
    classes.dedup();

    let (minority_name, majority_name) = match minority_label {
        Some(m) => {
            if !classes.iter().any(|c| c == m) {
                return Err(Error::InvalidDataset(format!(
                    "minority label `{m}` does not occur in the data"
                )));
            }
            let rest: Vec<&String> = classes.iter().filter(|c| c.as_str() != m).collect();
            if rest.is_empty() {
                return Err(Error::InvalidDataset(
                    "all rows carry the minority label".into(),
                ));
            }
            let majority = if rest.len() == 1 {
                rest[0].clone()
            } else {
                "rest".to_owned()
            };
            (m.to_owned(), majority)
        }
        None => {
            if classes.len() != 2 {
                return Err(Error::InvalidDataset(format!(
                    "found {} label values; pass an explicit minority label to reduce \
                     a multiclass dataset to binary",
                    classes.len()
                )));
            }
            let count =
                |c: &str| raw_labels.iter().filter(|l| l.as_str() == c).count();
            let (c0, c1) = (count(&classes[0]), count(&classes[1]));
            // Less frequent value is the minority; ties favour the
            // lexicographically smaller value (classes is sorted).
            if c1 < c0 {
                (classes[1].clone(), classes[0].clone())
            } else {
                (classes[0].clone(), classes[1].clone())
            }
        }
    };

    let labels: Vec<bool> = raw_labels.iter().map(|l| *l == minority_name).collect();
    Dataset::new(
        name,
        FeatureMatrix::from_rows(&rows),
        labels,
        feature_names,
        headers[label_idx].clone(),
        minority_name,
        majority_name,
    )
}

/// Write a dataset as CSV in the same dialect `load_csv` reads.
///
/// Feature values use the shortest decimal form that parses back to the
/// identical bits, so a save/load round trip reproduces the matrix exactly.
/// The file is written atomically.
pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    header.push(&dataset.label_name);
    writer.write_record(&header)?;
    for (row, &is_minority) in dataset.features.iter_rows().zip(&dataset.labels) {
        let mut record: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        record.push(if is_minority {
            dataset.minority_name.clone()
        } else {
            dataset.majority_name.clone()
        });
        writer.write_record(&record)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidDataset(format!("csv buffer error: {e}")))?;
    atomic_write(path, &bytes)
}

/// Derive a more imbalanced variant by randomly discarding minority rows.
///
/// The minority class is subsampled to `round(minority / factor)` rows
/// (ties round to even), multiplying the imbalance ratio by roughly
/// `factor`; the majority class is untouched and surviving rows keep their
/// original order. Returns `None` when the subsample would hold fewer than
/// 8 minority rows — such variants are considered too degenerate to use.
pub fn make_undersampled_variant(
    dataset: &Dataset,
    factor: f64,
    seed: u64,
) -> Result<Option<Dataset>> {
    if !(factor.is_finite() && factor >= 1.0) {
        return Err(Error::InvalidParam(format!(
            "undersampling factor must be finite and >= 1, got {factor}"
        )));
    }
    let stats = dataset.class_stats();
    let keep = (stats.minority as f64 / factor).round_ties_even() as usize;
    if keep < 8 {
        return Ok(None);
    }
    let mut minority = dataset.minority_indices();
    minority.shuffle(&mut rng_from_seed(seed));
    minority.truncate(keep);
    let mut rows: Vec<usize> = dataset.majority_indices();
    rows.extend(&minority);
    rows.sort_unstable();
    let factor_label = if factor.fract() == 0.0 {
        format!("{factor:.0}")
    } else {
        format!("{factor}")
    };
    Ok(Some(dataset.subset(
        &rows,
        format!("{}_x{}", dataset.name, factor_label),
    )))
}

/// Repeated stratified k-fold assignment.
///
/// Each repeat shuffles the two classes independently on its own random
/// stream and deals rows round-robin over the `k` folds, so every fold's
/// class counts match the full dataset to within one row per class.
pub fn stratified_kfold(dataset: &Dataset, k: usize, repeats: usize, seed: u64) -> Result<FoldPlan> {
    let stats = dataset.class_stats();
    if k < 2 {
        return Err(Error::InvalidParam(format!(
            "stratified k-fold needs k >= 2, got {k}"
        )));
    }
    if repeats == 0 {
        return Err(Error::InvalidParam("repeats must be positive".into()));
    }
    if k > stats.minority {
        return Err(Error::InvalidParam(format!(
            "k={k} exceeds the minority count {}; some test folds would hold \
             no minority instance",
            stats.minority
        )));
    }
    let n = dataset.n_rows();
    let mut folds = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = rng_stream(seed, r as u64);
        let mut assignment = vec![0usize; n];
        for class in [true, false] {
            let mut members: Vec<usize> = (0..n).filter(|&i| dataset.labels[i] == class).collect();
            members.shuffle(&mut rng);
            for (i, &row) in members.iter().enumerate() {
                assignment[row] = i % k;
            }
        }
        let mut repeat_folds = Vec::with_capacity(k);
        for f in 0..k {
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            repeat_folds.push(Fold { train, test });
        }
        folds.push(repeat_folds);
    }
    Ok(FoldPlan {
        n_rows: n,
        k,
        repeats,
        seed,
        folds,
    })
}

/// One isotropic Gaussian blob for synthetic fixtures.
#[derive(Debug, Clone)]
pub struct BlobSpec {
    pub center: Vec<f64>,
    pub std_dev: f64,
    pub count: usize,
    pub minority: bool,
}

/// Sample a dataset from an arbitrary mixture of isotropic Gaussian blobs.
///
/// Rows come out blob by blob in specification order; all draws come from
/// one stream of `seed`, so the result is a pure function of its inputs.
pub fn make_blob_mixture(
    name: impl Into<String>,
    blobs: &[BlobSpec],
    seed: u64,
) -> Result<Dataset> {
    let dims = blobs
        .first()
        .map(|b| b.center.len())
        .ok_or_else(|| Error::InvalidParam("blob mixture needs at least one blob".into()))?;
    if dims == 0 {
        return Err(Error::InvalidParam("blob centers must be non-empty".into()));
    }
    for b in blobs {
        if b.center.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: b.center.len(),
            });
        }
        if !(b.std_dev.is_finite() && b.std_dev >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "blob standard deviation must be finite and non-negative, got {}",
                b.std_dev
            )));
        }
    }
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for blob in blobs {
        let normal = Normal::new(0.0, blob.std_dev)
            .map_err(|e| Error::InvalidParam(format!("bad blob distribution: {e}")))?;
        for _ in 0..blob.count {
            let row: Vec<f64> = blob
                .center
                .iter()
                .map(|c| c + normal.sample(&mut rng))
                .collect();
            rows.push(row);
            labels.push(blob.minority);
        }
    }
    let feature_names: Vec<String> = (0..dims).map(|j| format!("f{j}")).collect();
    Dataset::new(
        name,
        FeatureMatrix::from_rows(&rows),
        labels,
        feature_names,
        "label",
        "1",
        "0",
    )
}

/// Sample a two-class dataset of two unit-variance Gaussian blobs in `m`
/// dimensions whose centers sit `separation` apart (along the first axis).
/// Minority rows come first. Deterministic given `seed`.
pub fn make_blobs(
    n_minority: usize,
    n_majority: usize,
    m: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_minority < 2 || n_majority < 2 {
        return Err(Error::InvalidParam(format!(
            "each class needs at least 2 rows, got {n_minority}/{n_majority}"
        )));
    }
    if n_minority > n_majority {
        return Err(Error::InvalidParam(format!(
            "minority count {n_minority} exceeds majority count {n_majority}"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParam("need at least one feature".into()));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidParam(format!(
            "separation must be finite and non-negative, got {separation}"
        )));
    }
    let mut majority_center = vec![0.0; m];
    majority_center[0] = separation;
    make_blob_mixture(
        format!("blobs_{n_minority}_{n_majority}_{m}"),
        &[
            BlobSpec {
                center: vec![0.0; m],
                std_dev: 1.0,
                count: n_minority,
                minority: true,
            },
            BlobSpec {
                center: majority_center,
                std_dev: 1.0,
                count: n_majority,
                minority: false,
            },
        ],
        seed,
    )
}
