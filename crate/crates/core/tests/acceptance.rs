//! End-to-end checks of the headline guarantees, one test per guarantee.
//! Every test prints a single `[PASS]` line with the measured evidence;
//! a failed assertion doubles as the failure line.

mod common;

use std::time::{Duration, Instant};

use common::{
    desk_report, fixtures, planted_outlier_fixture, run_desk_suite, two_blob_fixture,
};
use kmsmote::classifiers::logreg_loss_and_gradient;
use kmsmote::data::Dataset;
use kmsmote::kmeans::ClusterModel;
use kmsmote::matrix::{dist, FeatureMatrix};
use kmsmote::metrics::{basic_rates, f1, gmean, ConfusionMatrix, ScoredPredictions};
use kmsmote::oversamplers::default_target_count;
use kmsmote::rng::rng_from_seed;
use kmsmote::{
    auprc, friedman_test, kmeans_smote, kmeans_smote_with_details, smote, write_report_files,
    DensityExponent, KmsParams, Metric, NeighborCount, OversamplerSpec,
};
use rand::Rng;

fn kms_params(k: usize, irt: f64, knn: NeighborCount, de: DensityExponent, seed: u64) -> KmsParams {
    KmsParams {
        k,
        irt,
        knn,
        de,
        n: None,
        seed,
        fallback: false,
    }
}

/// With a single cluster and an unbounded imbalance threshold, the
/// cluster-based sampler must reproduce plain interpolation bit for bit,
/// and a zero neighbor count must degenerate to exact duplication.
#[test]
fn single_cluster_run_equals_plain_interpolation_bitwise() {
    let start = Instant::now();
    let mut runs = 0usize;
    for d in &fixtures() {
        let n = default_target_count(&d.class_stats());
        for seed in 0..20u64 {
            let p = kms_params(
                1,
                f64::INFINITY,
                NeighborCount::Exact(5),
                DensityExponent::Value(2.0),
                seed,
            );
            let clustered = kmeans_smote(d, &p).expect("single-cluster run");
            let plain = smote(d, n, NeighborCount::Exact(5), seed).expect("plain run");
            assert_eq!(
                clustered.samples.as_slice(),
                plain.samples.as_slice(),
                "samples diverged on {} at seed {seed}",
                d.name
            );
            assert_eq!(
                clustered.parents, plain.parents,
                "parents diverged on {} at seed {seed}",
                d.name
            );

            let copies = kmeans_smote(
                d,
                &kms_params(
                    1,
                    f64::INFINITY,
                    NeighborCount::Exact(0),
                    DensityExponent::Value(2.0),
                    seed,
                ),
            )
            .expect("duplication run");
            for (row, &(a, b)) in copies.parents.iter().enumerate() {
                assert_eq!(a, b, "duplication must report one parent twice");
                assert!(d.labels[a], "duplication parent must be a minority row");
                assert_eq!(
                    copies.samples.row(row),
                    d.features.row(a),
                    "zero-neighbor samples must copy their parent exactly"
                );
            }
            runs += 2;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed < Duration::from_secs(5),
        "limit-case sweep took {elapsed:.2?}, budget is 5 s"
    );
    println!(
        "[PASS] single-cluster runs match plain interpolation bitwise: \
         {runs} runs over 3 datasets x 20 seeds in {elapsed:.2?}"
    );
}

/// Every generating oversampler brings the classes to an exact 1:1 count
/// under its default budget.
#[test]
fn every_oversampler_balances_classes_exactly() {
    let specs = vec![
        OversamplerSpec::Random,
        OversamplerSpec::Smote {
            knn: NeighborCount::Exact(5),
        },
        OversamplerSpec::Borderline {
            variant: kmsmote::BorderlineVariant::One,
            knn: 5,
        },
        OversamplerSpec::Borderline {
            variant: kmsmote::BorderlineVariant::Two,
            knn: 5,
        },
        OversamplerSpec::KmeansSmote {
            k: 3,
            irt: f64::INFINITY,
            knn: NeighborCount::Exact(5),
            de: DensityExponent::Value(2.0),
        },
    ];
    let mut checked = 0usize;
    for d in &fixtures() {
        for spec in &specs {
            let balanced = spec
                .apply(d, 7 + checked as u64, None)
                .unwrap_or_else(|e| panic!("{} failed on {}: {e}", spec.label(), d.name));
            let stats = balanced.class_stats();
            assert_eq!(
                stats.minority, stats.majority,
                "{} left {} unbalanced: {} vs {}",
                spec.label(),
                d.name,
                stats.minority,
                stats.majority
            );
            checked += 1;
        }
    }
    println!(
        "[PASS] exact class balance: {checked} (oversampler, dataset) pairs all reach 1:1"
    );
}

/// A lone minority row planted deep inside the majority blob must never
/// seed a synthetic row under cluster filtering, while plain interpolation
/// does use it.
#[test]
fn cluster_filtering_never_samples_the_planted_outlier() {
    let (d, outlier_row) = planted_outlier_fixture();
    let n = default_target_count(&d.class_stats());

    let mut filtered_hits = 0usize;
    let mut plain_hit_seeds = 0usize;
    for seed in 0..20u64 {
        let batch = kmeans_smote(
            &d,
            &kms_params(
                10,
                1.0,
                NeighborCount::Exact(5),
                DensityExponent::Auto,
                seed,
            ),
        )
        .expect("filtered run must find minority clusters");
        filtered_hits += batch
            .parents
            .iter()
            .filter(|&&(a, b)| a == outlier_row || b == outlier_row)
            .count();

        let plain = smote(&d, n, NeighborCount::Exact(5), seed).expect("plain run");
        if plain
            .parents
            .iter()
            .any(|&(a, b)| a == outlier_row || b == outlier_row)
        {
            plain_hit_seeds += 1;
        }
    }
    assert_eq!(
        filtered_hits, 0,
        "cluster filtering used the planted outlier as a parent"
    );
    assert!(
        plain_hit_seeds >= 1,
        "plain interpolation never touched the outlier, differential not shown"
    );
    println!(
        "[PASS] noise avoidance: filtered sampler used the planted outlier 0 times \
         over 20 seeds; plain interpolation used it in {plain_hit_seeds}/20 seeds"
    );
}

/// Replays cluster filtering, density weighting, and largest-remainder
/// allocation from the raw model with naive arithmetic.
fn naive_quotas(d: &Dataset, model: &ClusterModel, irt: f64, de: f64, n: usize) -> Vec<(usize, usize)> {
    struct Kept {
        cluster: usize,
        minority: Vec<usize>,
        avg: f64,
        sparsity: f64,
    }
    let mut kept: Vec<Kept> = Vec::new();
    for c in 0..model.k {
        let rows: Vec<usize> = (0..d.n_rows())
            .filter(|&r| model.assignments[r] == c)
            .collect();
        let minority: Vec<usize> = rows.iter().copied().filter(|&r| d.labels[r]).collect();
        let majority = rows.len() - minority.len();
        let ratio = (majority as f64 + 1.0) / (minority.len() as f64 + 1.0);
        if ratio < irt && !minority.is_empty() {
            kept.push(Kept {
                cluster: c,
                minority,
                avg: f64::NAN,
                sparsity: 0.0,
            });
        }
    }
    for item in &mut kept {
        if item.minority.len() >= 2 {
            let mut sum = 0.0;
            let mut pairs = 0.0;
            for i in 0..item.minority.len() {
                for j in (i + 1)..item.minority.len() {
                    sum += dist(
                        d.features.row(item.minority[i]),
                        d.features.row(item.minority[j]),
                    );
                    pairs += 1.0;
                }
            }
            item.avg = sum / pairs;
        }
    }
    let known: Vec<f64> = kept.iter().map(|k| k.avg).filter(|v| v.is_finite()).collect();
    let borrow = if known.is_empty() {
        1.0
    } else {
        known.iter().sum::<f64>() / known.len() as f64
    };
    for item in &mut kept {
        if !item.avg.is_finite() {
            item.avg = borrow;
        }
        item.sparsity = item.avg.max(1e-12).powf(de) / item.minority.len() as f64;
    }
    let total: f64 = kept.iter().map(|k| k.sparsity).sum();
    let mut quotas: Vec<usize> = Vec::new();
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0usize;
    for (pos, item) in kept.iter().enumerate() {
        let ideal = n as f64 * item.sparsity / total;
        let floor = ideal.floor() as usize;
        quotas.push(floor);
        assigned += floor;
        remainders.push((pos, ideal - floor as f64));
    }
    remainders.sort_by(|&(ia, ra), &(ib, rb)| {
        rb.total_cmp(&ra)
            .then(kept[ib].sparsity.total_cmp(&kept[ia].sparsity))
            .then(kept[ia].cluster.cmp(&kept[ib].cluster))
    });
    for &(pos, _) in remainders.iter().take(n - assigned) {
        quotas[pos] += 1;
    }
    kept.iter()
        .zip(quotas)
        .map(|(item, q)| (item.cluster, q))
        .collect()
}

/// With one dense and one sparse minority blob of equal size, the sparse
/// blob must receive the larger share of the synthetic budget, and the
/// quotas must match a from-scratch replay of the weighting arithmetic.
#[test]
fn sparse_minority_regions_get_the_larger_quota() {
    let mut sparse_margins = Vec::new();
    for seed in 0..20u64 {
        let d = two_blob_fixture(seed);
        let n = default_target_count(&d.class_stats());
        let p = kms_params(
            3,
            1.0,
            NeighborCount::Exact(5),
            DensityExponent::Value(2.0),
            seed,
        );
        let outcome = kmeans_smote_with_details(&d, &p).expect("two-blob run");
        assert_eq!(
            outcome.clusters.len(),
            2,
            "expected exactly the two minority blobs to survive filtering at seed {seed}"
        );

        // Rows 0..8 are the dense blob, rows 8..16 the sparse one.
        let mut dense_quota = None;
        let mut sparse_quota = None;
        for c in &outcome.clusters {
            assert_eq!(c.minority_idx.len(), 8, "blob split across clusters at seed {seed}");
            if c.minority_idx.iter().all(|&r| r < 8) {
                dense_quota = Some(c.quota);
            } else if c.minority_idx.iter().all(|&r| (8..16).contains(&r)) {
                sparse_quota = Some(c.quota);
            }
        }
        let (dense, sparse) = (
            dense_quota.expect("dense blob missing"),
            sparse_quota.expect("sparse blob missing"),
        );
        assert!(
            sparse > dense,
            "sparse blob got {sparse} <= dense {dense} at seed {seed}"
        );
        sparse_margins.push(sparse as f64 / n as f64);

        let mut expected = naive_quotas(&d, &outcome.model, p.irt, 2.0, n);
        expected.sort_by_key(|&(c, _)| c);
        let mut actual: Vec<(usize, usize)> = outcome
            .clusters
            .iter()
            .map(|c| (c.cluster_id, c.quota))
            .collect();
        actual.sort_by_key(|&(c, _)| c);
        assert_eq!(
            actual, expected,
            "quota allocation diverged from the naive replay at seed {seed}"
        );
    }
    let mean_share = sparse_margins.iter().sum::<f64>() / sparse_margins.len() as f64;
    println!(
        "[PASS] within-class rebalancing: sparse blob out-quota'd the dense blob in \
         20/20 seeded runs (mean sparse share {mean_share:.3}), matching the naive replay exactly"
    );
}

/// Average precision by threshold enumeration, written independently of
/// the library implementation: walk the distinct scores from high to low
/// and accumulate precision at every recall step.
fn brute_force_average_precision(scores: &[f64], truth: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let total_pos = truth.iter().filter(|&&t| t).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let tp = scores
            .iter()
            .zip(truth)
            .filter(|&(s, &y)| *s >= t && y)
            .count() as f64;
        let predicted_pos = scores.iter().filter(|&&s| s >= t).count() as f64;
        let recall = tp / total_pos;
        let precision = tp / predicted_pos;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// The ranking metric must agree with brute-force threshold enumeration on
/// random score tables (ties included), and the scalar metrics must hit
/// hand-computed tables exactly.
#[test]
fn metric_values_match_independent_oracles() {
    let mut rng = rng_from_seed(9);
    let tie_grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let mut checked = 0usize;
    let mut max_err: f64 = 0.0;
    while checked < 1000 {
        let n = rng.random_range(2..=12usize);
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < 0.5 {
                    tie_grid[rng.random_range(0..tie_grid.len())]
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let truth: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.4).collect();
        if truth.iter().all(|&t| t) || truth.iter().all(|&t| !t) {
            continue;
        }
        let sp = ScoredPredictions::new(scores.clone(), truth.clone()).unwrap();
        let got = auprc(&sp);
        let want = brute_force_average_precision(&scores, &truth);
        let err = (got - want).abs();
        max_err = max_err.max(err);
        assert!(
            err <= 1e-12,
            "ranking metric {got} != brute force {want} on scores {scores:?} truth {truth:?}"
        );
        checked += 1;
    }

    let cm = ConfusionMatrix {
        tp: 40,
        fp: 10,
        tn: 45,
        fn_: 5,
    };
    let rates = basic_rates(&cm);
    assert_eq!(rates.accuracy, 85.0 / 100.0);
    assert_eq!(rates.sensitivity, 40.0 / 45.0);
    assert_eq!(rates.specificity, 45.0 / 55.0);
    assert_eq!(rates.precision, 40.0 / 50.0);
    assert_eq!(f1(&cm), 2.0 * 0.8 * (8.0 / 9.0) / (0.8 + 8.0 / 9.0));
    assert_eq!(gmean(&cm), (8.0f64 / 11.0).sqrt());

    let textbook = ScoredPredictions::new(
        vec![0.9, 0.8, 0.7, 0.6],
        vec![true, false, true, false],
    )
    .unwrap();
    assert!((auprc(&textbook) - 5.0 / 6.0).abs() <= 1e-15);

    println!(
        "[PASS] metric oracles: 1000 random score tables match brute-force \
         threshold enumeration (max |err| {max_err:.2e}); hand tables exact"
    );
}

/// The rank test statistic and its tail probability on a table whose
/// closed-form values are known: four blocks ranking three methods
/// identically give a statistic of exactly 8 and a tail of e^-4.
#[test]
fn friedman_statistic_and_tail_match_closed_form() {
    let blocks = vec![vec![1.0, 2.0, 3.0]; 4];
    let result = friedman_test(&blocks).unwrap();
    assert!(
        (result.statistic - 8.0).abs() <= 1e-12,
        "statistic {} != 8",
        result.statistic
    );
    assert_eq!(result.degrees_of_freedom, 2.0);
    let expected_p = 0.018315638888734179_f64; // e^-4
    assert!(
        (result.p_value - expected_p).abs() <= 1e-6,
        "tail probability {} != {expected_p}",
        result.p_value
    );
    assert!(
        (result.p_value - (-4.0f64).exp()).abs() <= 1e-12,
        "tail probability drifted beyond float tolerance"
    );
    assert!(result.rejected);
    println!(
        "[PASS] rank test closed form: statistic {:.12} (= 8), tail {:.12e} (= e^-4)",
        result.statistic, result.p_value
    );
}

/// On the desk-scale suite, the cluster-based sampler must rank at least
/// as well as plain interpolation under the nearest-neighbor classifier
/// for most metrics, and at least one ranking table must show a
/// significant difference between the method families.
#[test]
fn desk_scale_run_reproduces_the_headline_trend() {
    let (report, took) = desk_report();
    assert!(
        *took < Duration::from_secs(1800),
        "desk-scale run took {took:.1?}, budget is 30 min"
    );

    let mut wins = Vec::new();
    for metric in [Metric::Auprc, Metric::F1, Metric::Gmean] {
        let table = report
            .rankings
            .iter()
            .find(|t| t.classifier_family == "knn" && t.metric == metric.label())
            .unwrap_or_else(|| panic!("missing ranking table for knn/{}", metric.label()));
        let pos = |family: &str| {
            table
                .oversampler_families
                .iter()
                .position(|f| f == family)
                .unwrap_or_else(|| panic!("{family} missing from ranking table"))
        };
        let kms_rank = table.mean_ranks[pos("kmeans-smote")];
        let smote_rank = table.mean_ranks[pos("smote")];
        if kms_rank <= smote_rank {
            wins.push(format!(
                "{}: {:.3} vs {:.3}",
                metric.label(),
                kms_rank,
                smote_rank
            ));
        }
    }
    assert!(
        wins.len() >= 2,
        "cluster-based sampler out-ranked plain interpolation on only {}/3 metrics \
         under the nearest-neighbor classifier",
        wins.len()
    );

    let significant = report
        .rankings
        .iter()
        .filter(|t| t.friedman.as_ref().is_some_and(|f| f.rejected))
        .count();
    assert!(
        significant >= 1,
        "no ranking table reached significance at the 0.05 level"
    );

    println!(
        "[PASS] desk-scale trend: cluster-based sampler ranked <= plain interpolation \
         under knn on {}/3 metrics ({}); {significant}/{} tables significant; run took {took:.1?}",
        wins.len(),
        wins.join("; "),
        report.rankings.len()
    );
}

/// Re-running the desk-scale experiment with the same seed must yield
/// byte-identical report files.
#[test]
fn desk_scale_report_files_are_byte_stable() {
    let (first, _) = desk_report();
    let second = run_desk_suite();

    let dir = tempfile::tempdir().unwrap();
    let dir_a = dir.path().join("a");
    let dir_b = dir.path().join("b");
    write_report_files(first, &dir_a).unwrap();
    write_report_files(&second, &dir_b).unwrap();

    let mut sizes = Vec::new();
    for file in ["report.json", "cells.csv", "ranks.csv"] {
        let a = std::fs::read(dir_a.join(file)).unwrap();
        let b = std::fs::read(dir_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identically seeded runs");
        sizes.push(format!("{file} {} bytes", a.len()));
    }
    println!(
        "[PASS] determinism: two identically seeded desk-scale runs wrote \
         byte-identical files ({})",
        sizes.join(", ")
    );
}

/// The analytic gradient of the regularized log loss must agree with
/// central finite differences on random instances.
#[test]
fn logreg_gradient_matches_finite_differences() {
    let mut rng = rng_from_seed(77);
    let l2_grid = [0.0, 1e-4, 0.01];
    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    for instance in 0..50 {
        let rows = rng.random_range(4..=20usize);
        let cols = rng.random_range(1..=5usize);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let features = FeatureMatrix::from_flat(rows, cols, data);
        let labels: Vec<bool> = (0..rows).map(|_| rng.random::<f64>() < 0.5).collect();
        let weights: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias: f64 = rng.random_range(-1.0..1.0);
        let l2 = l2_grid[instance % l2_grid.len()];

        let (_, grad, grad_bias) = logreg_loss_and_gradient(&features, &labels, &weights, bias, l2);

        let loss_at = |w: &[f64], b: f64| logreg_loss_and_gradient(&features, &labels, w, b, l2).0;
        for j in 0..=cols {
            let (analytic, fd) = if j < cols {
                let mut up = weights.clone();
                let mut down = weights.clone();
                up[j] += h;
                down[j] -= h;
                (grad[j], (loss_at(&up, bias) - loss_at(&down, bias)) / (2.0 * h))
            } else {
                (
                    grad_bias,
                    (loss_at(&weights, bias + h) - loss_at(&weights, bias - h)) / (2.0 * h),
                )
            };
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0);
            max_rel = max_rel.max(rel);
            assert!(
                rel <= 1e-5,
                "gradient coordinate {j} off by {rel:.2e} on instance {instance} \
                 (analytic {analytic}, finite difference {fd})"
            );
        }
    }
    println!(
        "[PASS] gradient check: analytic log-loss gradient within 1e-5 of central \
         finite differences on 50 random instances (max relative error {max_rel:.2e})"
    );
}
