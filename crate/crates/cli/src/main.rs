//! Batch front end: `oversample` balances one CSV file, `evaluate` runs
//! the cross-validated oversampler comparison, `rank` re-derives rank
//! tables from a stored report, and `variants` emits progressively more
//! imbalanced copies of a dataset.
//!
//! Every flag can also be supplied through a flat `key = value` config
//! file (`--config`); explicit flags win. Exit codes: 0 success, 2 input
//! or parameter error, 3 when no cluster passes the imbalance filter,
//! 4 internal failure.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kmsmote::data::{load_csv, make_undersampled_variant, save_csv, Dataset, LabelColumn};
use kmsmote::io_util::atomic_write;
use kmsmote::matrix::FeatureMatrix;
use kmsmote::oversamplers::{
    borderline_smote, default_target_count, random_oversample, save_batch_csv, smote,
    BorderlineVariant, NeighborCount, SyntheticBatch,
};
use kmsmote::{
    kmeans_smote_with_details, run_experiment, write_ranks_csv, write_report_files, CellCache,
    DensityExponent, Error, EvalReport, GridSpec, KmsParams, Result,
};

#[derive(Parser)]
#[command(
    name = "kmsmote",
    version,
    about = "Rebalance binary class-imbalanced datasets and compare oversamplers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Balance one CSV dataset with a chosen oversampler.
    Oversample(OversampleArgs),
    /// Cross-validated grid comparison of oversamplers on CSV datasets.
    Evaluate(EvaluateArgs),
    /// Re-derive the rank tables from a stored report.json.
    Rank(RankArgs),
    /// Write undersampled dataset variants at growing imbalance factors.
    Variants(VariantsArgs),
}

#[derive(Args)]
struct OversampleArgs {
    /// Input CSV with a header row; the label sits in the last column
    /// unless --label-column says otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output CSV holding the original rows followed by the synthetic ones.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Audit CSV, one row per synthetic sample with its parents (default:
    /// output path with a .provenance.csv suffix).
    #[arg(long)]
    provenance: Option<PathBuf>,
    /// JSON run summary (default: output path with a .summary.json suffix).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Flat `key = value` file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// none | random | smote | borderline1 | borderline2 | kmeans-smote
    #[arg(long)]
    method: Option<String>,
    /// Cluster count for kmeans-smote.
    #[arg(long)]
    k: Option<String>,
    /// Imbalance ratio threshold for the cluster filter; accepts `inf`.
    #[arg(long)]
    irt: Option<String>,
    /// Nearest-neighbor count for interpolation; accepts `all`.
    #[arg(long)]
    knn: Option<String>,
    /// Density exponent for the sampling weights; accepts `auto`.
    #[arg(long)]
    de: Option<String>,
    /// Number of synthetic rows (default: exactly enough to balance).
    #[arg(long)]
    n: Option<String>,
    /// RNG seed; identical seeds reproduce identical files.
    #[arg(long)]
    seed: Option<String>,
    /// Interpolate over the whole minority class instead of failing when
    /// no cluster passes the imbalance filter.
    #[arg(long)]
    fallback: bool,
    /// Standardize features (zero mean, unit variance) before resampling.
    #[arg(long)]
    scale: bool,
    /// Label column name or zero-based index (default: last column).
    #[arg(long)]
    label_column: Option<String>,
    /// Which label value is the minority class (default: least frequent).
    #[arg(long)]
    minority_label: Option<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Input dataset CSV; repeat the flag for several datasets.
    #[arg(long = "dataset")]
    datasets: Vec<PathBuf>,
    /// Directory receiving report.json, cells.csv, ranks.csv, cache.json.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Hyperparameter grid: `full` or `reduced` (desk scale).
    #[arg(long)]
    grid: Option<String>,
    /// Folds per repeat.
    #[arg(long)]
    folds: Option<String>,
    /// Number of shuffled repeats of the k-fold split.
    #[arg(long)]
    repeats: Option<String>,
    /// Master seed; every cell derives its own stream from it.
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<String>,
    /// Recompute every cell even when cache.json already covers it.
    #[arg(long)]
    no_cache: bool,
    /// Flat `key = value` file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Path to a report.json written by `evaluate`.
    #[arg(long)]
    report: PathBuf,
    /// Where to write the rank tables as CSV (default: print only).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VariantsArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory receiving one CSV per admissible factor plus
    /// variants.json.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated undersampling factors.
    #[arg(long)]
    factors: Option<String>,
    /// RNG seed for the minority subsampling.
    #[arg(long)]
    seed: Option<String>,
    /// Label column name or zero-based index (default: last column).
    #[arg(long)]
    label_column: Option<String>,
    /// Which label value is the minority class (default: least frequent).
    #[arg(long)]
    minority_label: Option<String>,
    /// Flat `key = value` file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Oversample(args) => cmd_oversample(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Rank(args) => cmd_rank(args),
        Command::Variants(args) => cmd_variants(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NoMinorityCluster { .. } => 3,
                Error::Json(_) | Error::NonFiniteLoss { .. } => 4,
                _ => 2,
            })
        }
    }
}

// ---------------------------------------------------------------------
// config file handling

/// Flat `key = value` lines; `#` starts a comment, blank lines ignored.
/// Keys are the long flag names (hyphens and underscores both accepted).
fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                row: i + 1,
                column: "config".into(),
                detail: format!("expected `key = value`, got {raw:?}"),
            });
        };
        map.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }
    Ok(map)
}

fn load_config(path: &Option<PathBuf>) -> Result<BTreeMap<String, String>> {
    match path {
        Some(p) => read_config(p),
        None => Ok(BTreeMap::new()),
    }
}

/// The effective value of one setting: explicit flag, else config entry.
fn pick(flag: &Option<String>, cfg: &BTreeMap<String, String>, key: &str) -> Option<String> {
    flag.clone().or_else(|| cfg.get(key).cloned())
}

fn pick_path(
    flag: &Option<PathBuf>,
    cfg: &BTreeMap<String, String>,
    key: &str,
) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.get(key).map(PathBuf::from))
}

fn require_path(
    flag: &Option<PathBuf>,
    cfg: &BTreeMap<String, String>,
    key: &str,
) -> Result<PathBuf> {
    pick_path(flag, cfg, key)
        .ok_or_else(|| Error::InvalidParam(format!("--{key} is required (flag or config file)")))
}

fn parse_setting<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidParam(format!("--{key}: {e} (got {value:?})")))
}

fn parsed_or<T: FromStr>(
    flag: &Option<String>,
    cfg: &BTreeMap<String, String>,
    key: &str,
    default: T,
) -> Result<T>
where
    T::Err: fmt::Display,
{
    match pick(flag, cfg, key) {
        Some(v) => parse_setting(key, &v),
        None => Ok(default),
    }
}

/// Boolean switch: flag presence forces `true`; otherwise the config may
/// say `true`/`false`/`1`/`0`.
fn flag_or(flag: bool, cfg: &BTreeMap<String, String>, key: &str) -> Result<bool> {
    if flag {
        return Ok(true);
    }
    match cfg.get(key).map(String::as_str) {
        None => Ok(false),
        Some("true") | Some("1") => Ok(true),
        Some("false") | Some("0") => Ok(false),
        Some(other) => Err(Error::InvalidParam(format!(
            "--{key}: expected true/false, got {other:?}"
        ))),
    }
}

// ---------------------------------------------------------------------
// oversample

#[derive(Clone, Copy, PartialEq, Eq)]
enum Method {
    None,
    Random,
    Smote,
    Borderline1,
    Borderline2,
    KmeansSmote,
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "none" => Ok(Method::None),
            "random" => Ok(Method::Random),
            "smote" => Ok(Method::Smote),
            "borderline1" | "borderline-smote1" => Ok(Method::Borderline1),
            "borderline2" | "borderline-smote2" => Ok(Method::Borderline2),
            "kmeans-smote" => Ok(Method::KmeansSmote),
            other => Err(format!(
                "unknown method {other:?}; expected none, random, smote, \
                 borderline1, borderline2, or kmeans-smote"
            )),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::None => "none",
            Method::Random => "random",
            Method::Smote => "smote",
            Method::Borderline1 => "borderline1",
            Method::Borderline2 => "borderline2",
            Method::KmeansSmote => "kmeans-smote",
        })
    }
}

fn label_column_from(value: &Option<String>) -> LabelColumn {
    match value {
        Some(s) => LabelColumn::NameOrIndex(s.clone()),
        None => LabelColumn::Last,
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Zero-mean, unit-variance rescaling of every feature column (population
/// variance; constant columns are left at zero).
fn standardized(d: &Dataset) -> Dataset {
    let rows = d.n_rows();
    let cols = d.n_features();
    let mut means = vec![0.0; cols];
    for row in d.features.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            means[j] += v;
        }
    }
    for m in &mut means {
        *m /= rows as f64;
    }
    let mut vars = vec![0.0; cols];
    for row in d.features.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            let c = v - means[j];
            vars[j] += c * c;
        }
    }
    let stds: Vec<f64> = vars
        .iter()
        .map(|v| {
            let s = (v / rows as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut flat = Vec::with_capacity(rows * cols);
    for row in d.features.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            flat.push((v - means[j]) / stds[j]);
        }
    }
    Dataset::new(
        d.name.clone(),
        FeatureMatrix::from_flat(rows, cols, flat),
        d.labels.clone(),
        d.feature_names.clone(),
        d.label_name.clone(),
        d.minority_name.clone(),
        d.majority_name.clone(),
    )
    .expect("rescaling keeps the dataset valid")
}

#[derive(Serialize)]
struct ClassCountsEcho {
    rows: usize,
    minority: usize,
    majority: usize,
    imbalance_ratio: f64,
}

#[derive(Serialize)]
struct ClusterEcho {
    cluster_id: usize,
    minority: usize,
    majority: usize,
    imbalance_ratio: f64,
    avg_minority_distance: f64,
    sampling_weight: f64,
    quota: usize,
}

#[derive(Serialize)]
struct OversampleSummary {
    command: &'static str,
    input: String,
    output: String,
    provenance: String,
    dataset: String,
    config: BTreeMap<String, String>,
    before: ClassCountsEcho,
    synthetic_rows: usize,
    after: ClassCountsEcho,
    clusters: Vec<ClusterEcho>,
    warnings: Vec<String>,
}

fn counts_echo(d: &Dataset) -> ClassCountsEcho {
    let stats = d.class_stats();
    ClassCountsEcho {
        rows: d.n_rows(),
        minority: stats.minority,
        majority: stats.majority,
        imbalance_ratio: stats.imbalance_ratio,
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_oversample(args: OversampleArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let input = require_path(&args.input, &cfg, "input")?;
    let output = require_path(&args.output, &cfg, "output")?;
    let provenance = pick_path(&args.provenance, &cfg, "provenance")
        .unwrap_or_else(|| with_suffix(&output, ".provenance.csv"));
    let summary_path = pick_path(&args.summary, &cfg, "summary")
        .unwrap_or_else(|| with_suffix(&output, ".summary.json"));

    let method: Method = parsed_or(&args.method, &cfg, "method", Method::KmeansSmote)?;
    let k: usize = parsed_or(&args.k, &cfg, "k", 3)?;
    let irt: f64 = parsed_or(&args.irt, &cfg, "irt", 1.0)?;
    let knn: NeighborCount = parsed_or(&args.knn, &cfg, "knn", NeighborCount::Exact(5))?;
    let de: DensityExponent = parsed_or(&args.de, &cfg, "de", DensityExponent::Auto)?;
    let seed: u64 = parsed_or(&args.seed, &cfg, "seed", 1)?;
    let n_override: Option<usize> = match pick(&args.n, &cfg, "n") {
        Some(v) => Some(parse_setting("n", &v)?),
        None => None,
    };
    let fallback = flag_or(args.fallback, &cfg, "fallback")?;
    let scale = flag_or(args.scale, &cfg, "scale")?;
    let label_column = pick(&args.label_column, &cfg, "label_column");
    let minority_label = pick(&args.minority_label, &cfg, "minority_label");

    let mut d = load_csv(
        &input,
        dataset_name(&input),
        &label_column_from(&label_column),
        minority_label.as_deref(),
    )?;
    if scale {
        d = standardized(&d);
    }
    let before = counts_echo(&d);
    let n = n_override.unwrap_or_else(|| default_target_count(&d.class_stats()));

    let mut clusters_echo = Vec::new();
    let batch = match method {
        Method::None => SyntheticBatch {
            method: "none".into(),
            seed,
            samples: FeatureMatrix::from_flat(0, d.n_features(), Vec::new()),
            parents: Vec::new(),
            clusters: None,
            warnings: Vec::new(),
        },
        Method::Random => random_oversample(&d, n, seed)?,
        Method::Smote => smote(&d, n, knn, seed)?,
        Method::Borderline1 | Method::Borderline2 => {
            let NeighborCount::Exact(kk) = knn else {
                return Err(Error::InvalidParam(
                    "--knn: borderline interpolation needs a fixed neighbor \
                     count, not `all`"
                        .into(),
                ));
            };
            let variant = if method == Method::Borderline1 {
                BorderlineVariant::One
            } else {
                BorderlineVariant::Two
            };
            borderline_smote(&d, n, kk, kk, variant, seed)?
        }
        Method::KmeansSmote => {
            let params = KmsParams {
                k,
                irt,
                knn,
                de,
                n: Some(n),
                seed,
                fallback,
            };
            let outcome = kmeans_smote_with_details(&d, &params)?;
            clusters_echo = outcome
                .clusters
                .iter()
                .map(|c| ClusterEcho {
                    cluster_id: c.cluster_id,
                    minority: c.minority_idx.len(),
                    majority: c.majority_idx.len(),
                    imbalance_ratio: c.imbalance_ratio,
                    avg_minority_distance: c.avg_minority_distance,
                    sampling_weight: c.sampling_weight,
                    quota: c.quota,
                })
                .collect();
            outcome.batch
        }
    };

    let balanced = d.with_synthetic_rows(&batch.samples);
    if method == Method::None && !scale {
        // Identity contract: the output file equals the input row for row,
        // including its original number formatting and column order.
        atomic_write(&output, &std::fs::read(&input)?)?;
    } else {
        save_csv(&balanced, &output)?;
    }
    save_batch_csv(&batch, &d.feature_names, &provenance)?;

    let mut config = BTreeMap::new();
    config.insert("method".to_string(), method.to_string());
    config.insert("k".into(), k.to_string());
    config.insert("irt".into(), irt.to_string());
    config.insert("knn".into(), knn.to_string());
    config.insert("de".into(), de.to_string());
    config.insert("n".into(), n.to_string());
    config.insert("seed".into(), seed.to_string());
    config.insert("fallback".into(), fallback.to_string());
    config.insert("scale".into(), scale.to_string());
    if let Some(v) = &label_column {
        config.insert("label_column".into(), v.clone());
    }
    if let Some(v) = &minority_label {
        config.insert("minority_label".into(), v.clone());
    }

    let after = counts_echo(&balanced);
    let summary = OversampleSummary {
        command: "oversample",
        input: input.display().to_string(),
        output: output.display().to_string(),
        provenance: provenance.display().to_string(),
        dataset: d.name.clone(),
        config,
        before,
        synthetic_rows: batch.n_rows(),
        after,
        clusters: clusters_echo,
        warnings: batch.warnings.clone(),
    };
    atomic_write(&summary_path, &serde_json::to_vec_pretty(&summary)?)?;

    for w in &batch.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "wrote {} ({} minority / {} majority), {} synthetic rows; \
         provenance {}, summary {}",
        output.display(),
        summary.after.minority,
        summary.after.majority,
        summary.synthetic_rows,
        provenance.display(),
        summary_path.display(),
    );
    Ok(())
}

// ---------------------------------------------------------------------
// evaluate

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let output_dir = require_path(&args.output_dir, &cfg, "output-dir")?;
    let mut dataset_paths = args.datasets.clone();
    if dataset_paths.is_empty() {
        if let Some(list) = cfg.get("dataset") {
            dataset_paths = list.split(',').map(|s| PathBuf::from(s.trim())).collect();
        }
    }
    if dataset_paths.is_empty() {
        return Err(Error::InvalidParam(
            "--dataset is required at least once (flag or config file)".into(),
        ));
    }

    let grid_name = pick(&args.grid, &cfg, "grid").unwrap_or_else(|| "reduced".into());
    let grid = match grid_name.as_str() {
        "full" => GridSpec::full(),
        "reduced" => GridSpec::reduced(),
        other => {
            return Err(Error::InvalidParam(format!(
                "--grid: expected `full` or `reduced`, got {other:?}"
            )))
        }
    };
    let folds: usize = parsed_or(&args.folds, &cfg, "folds", 5)?;
    let repeats: usize = parsed_or(&args.repeats, &cfg, "repeats", 5)?;
    let seed: u64 = parsed_or(&args.seed, &cfg, "seed", 1)?;
    let jobs: Option<usize> = match pick(&args.jobs, &cfg, "jobs") {
        Some(v) => Some(parse_setting("jobs", &v)?),
        None => None,
    };
    let use_cache = !flag_or(args.no_cache, &cfg, "no_cache")?;

    if let Some(threads) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidParam(format!("--jobs: {e}")))?;
    }

    let mut datasets = Vec::new();
    for path in &dataset_paths {
        datasets.push(load_csv(
            path,
            dataset_name(path),
            &LabelColumn::Last,
            None,
        )?);
    }

    std::fs::create_dir_all(&output_dir)?;
    let cache_path = output_dir.join("cache.json");
    let report = if use_cache {
        let mut cache = CellCache::load(&cache_path)?;
        let known = cache.cells.len();
        let report = run_experiment(&datasets, &grid, folds, repeats, seed, Some(&mut cache))?;
        cache.save(&cache_path)?;
        println!(
            "cache: {} cells known before the run, {} after ({})",
            known,
            cache.cells.len(),
            cache_path.display()
        );
        report
    } else {
        run_experiment(&datasets, &grid, folds, repeats, seed, None)?
    };

    write_report_files(&report, &output_dir)?;
    print_report_summary(&report);
    println!("report files in {}", output_dir.display());
    Ok(())
}

fn print_report_summary(report: &EvalReport) {
    let failed_cells: usize = report.failures.iter().map(|f| f.cells).sum();
    let skipped_cells: usize = report.skipped.iter().map(|s| s.cells).sum();
    println!(
        "evaluated {} datasets, {} (combo, classifier, metric) rows; \
         {} cells failed, {} cells skipped",
        report.datasets.len(),
        report.cells.len(),
        failed_cells,
        skipped_cells,
    );
    for table in &report.rankings {
        let ranks: Vec<String> = table
            .oversampler_families
            .iter()
            .zip(&table.mean_ranks)
            .map(|(f, r)| format!("{f} {r:.3}"))
            .collect();
        let verdict = match &table.friedman {
            Some(fr) if fr.rejected => format!("p={:.4} *", fr.p_value),
            Some(fr) => format!("p={:.4}", fr.p_value),
            None => "no test".into(),
        };
        println!(
            "  {}/{}: {} ({verdict})",
            table.classifier_family,
            table.metric,
            ranks.join(", "),
        );
    }
}

// ---------------------------------------------------------------------
// rank

fn cmd_rank(args: RankArgs) -> Result<()> {
    let bytes = std::fs::read(&args.report)?;
    let report: EvalReport = serde_json::from_slice(&bytes)?;
    print_report_summary(&report);
    if let Some(path) = &args.output {
        write_ranks_csv(&report, path)?;
        println!("rank tables written to {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------
// variants

#[derive(Serialize)]
struct EmittedVariant {
    factor: f64,
    path: String,
    minority: usize,
    majority: usize,
    imbalance_ratio: f64,
}

#[derive(Serialize)]
struct SkippedVariant {
    factor: f64,
    reason: String,
}

#[derive(Serialize)]
struct VariantsSummary {
    command: &'static str,
    input: String,
    dataset: String,
    seed: u64,
    factors: Vec<f64>,
    emitted: Vec<EmittedVariant>,
    skipped: Vec<SkippedVariant>,
}

fn factor_tag(factor: f64) -> String {
    if factor.fract() == 0.0 {
        format!("{}", factor as u64)
    } else {
        format!("{factor}").replace('.', "_")
    }
}

fn cmd_variants(args: VariantsArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let input = require_path(&args.input, &cfg, "input")?;
    let output_dir = require_path(&args.output_dir, &cfg, "output-dir")?;
    let factors_raw =
        pick(&args.factors, &cfg, "factors").unwrap_or_else(|| "2,4,6,10,15,20".into());
    let seed: u64 = parsed_or(&args.seed, &cfg, "seed", 1)?;
    let label_column = pick(&args.label_column, &cfg, "label_column");
    let minority_label = pick(&args.minority_label, &cfg, "minority_label");

    let mut factors = Vec::new();
    for part in factors_raw.split(',') {
        factors.push(parse_setting::<f64>("factors", part.trim())?);
    }

    let d = load_csv(
        &input,
        dataset_name(&input),
        &label_column_from(&label_column),
        minority_label.as_deref(),
    )?;
    let minority = d.class_stats().minority;

    std::fs::create_dir_all(&output_dir)?;
    let mut emitted = Vec::new();
    let mut skipped = Vec::new();
    for &factor in &factors {
        match make_undersampled_variant(&d, factor, seed)? {
            Some(variant) => {
                let path = output_dir.join(format!("{}_x{}.csv", d.name, factor_tag(factor)));
                save_csv(&variant, &path)?;
                let stats = variant.class_stats();
                println!(
                    "factor {factor}: wrote {} ({} minority / {} majority, IR {:.2})",
                    path.display(),
                    stats.minority,
                    stats.majority,
                    stats.imbalance_ratio
                );
                emitted.push(EmittedVariant {
                    factor,
                    path: path.display().to_string(),
                    minority: stats.minority,
                    majority: stats.majority,
                    imbalance_ratio: stats.imbalance_ratio,
                });
            }
            None => {
                let target = (minority as f64 / factor).round() as usize;
                let reason = format!(
                    "round({minority}/{factor}) = {target} minority rows would \
                     fall below the floor of 8"
                );
                eprintln!("skipped factor {factor}: {reason}");
                skipped.push(SkippedVariant { factor, reason });
            }
        }
    }

    let summary = VariantsSummary {
        command: "variants",
        input: input.display().to_string(),
        dataset: d.name.clone(),
        seed,
        factors,
        emitted,
        skipped,
    };
    atomic_write(
        &output_dir.join("variants.json"),
        &serde_json::to_vec_pretty(&summary)?,
    )?;
    println!(
        "{} variants written, {} skipped; summary in {}",
        summary.emitted.len(),
        summary.skipped.len(),
        output_dir.join("variants.json").display()
    );
    Ok(())
}
