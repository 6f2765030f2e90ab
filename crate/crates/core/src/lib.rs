//! Rebalancing of binary class-imbalanced datasets by cluster-aware
//! synthetic oversampling, plus the comparative evaluation protocol used
//! to judge it against the classic oversamplers.
//!
//! The pipeline of the headline method: k-means clustering of the input
//! space, a cluster-level imbalance filter keeping minority-dominated
//! regions, density-based sampling weights steering the synthetic budget
//! toward sparse minority areas, and per-cluster interpolation. Sitting
//! next to it: random duplication, plain interpolation, and both
//! borderline variants, all under one API, evaluated by repeated
//! stratified cross-validation with grid search, imbalance-aware metrics,
//! mean ranking, and the Friedman test.

pub mod classifiers;
pub mod data;
pub mod error;
pub mod eval;
pub mod io_util;
pub mod kmeans;
pub mod kmeans_smote;
pub mod matrix;
pub mod metrics;
pub mod oversamplers;
pub mod rng;
pub mod stat;

pub use data::{
    load_csv, make_blob_mixture, make_blobs, make_undersampled_variant, save_csv,
    stratified_kfold, BlobSpec, ClassStats, Dataset, Fold, FoldPlan, LabelColumn,
};
pub use error::{Error, Result};
pub use eval::{
    average_ranks, friedman_test, mean_ranking, run_experiment, write_ranks_csv,
    write_report_files, CellCache, ClassifierSpec, EvalReport, GridSpec, Metric, OversamplerSpec,
};
pub use kmeans::{fit_kmeans, predict_cluster, ClusterModel, KmeansConfig};
pub use kmeans_smote::{
    allocate_quotas, filter_clusters, kmeans_smote, kmeans_smote_with_details,
    kmeans_smote_with_model, sampling_weights, DensityExponent, FilteredCluster, KmsOutcome,
    KmsParams,
};
pub use matrix::FeatureMatrix;
pub use metrics::{
    auprc, auprc_from, basic_rates, confusion, f1, f_measure, gmean, BasicRates, ConfusionMatrix,
    ScoredPredictions,
};
pub use oversamplers::{
    borderline_smote, random_oversample, save_batch_csv, smote, BorderlineVariant, NeighborCount,
    SyntheticBatch,
};
