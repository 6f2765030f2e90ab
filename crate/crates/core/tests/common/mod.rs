//! Fixtures shared by the integration suites: small mixtures for the
//! equivalence and balance checks, a planted-outlier set for the noise
//! differential, a two-blob set for quota checks, and a desk-scale
//! suite of eight datasets shaped like well-known small UCI tables.
#![allow(dead_code)] // each test binary uses its own subset of the helpers

use std::sync::OnceLock;

use kmsmote::data::BlobSpec;
use kmsmote::{make_blob_mixture, run_experiment, Dataset, EvalReport, GridSpec};

pub const DESK_SEED: u64 = 20250815;

/// Three small, differently shaped datasets for batch-level checks.
pub fn fixtures() -> Vec<Dataset> {
    vec![
        make_blob_mixture(
            "two_gaussians",
            &[
                BlobSpec {
                    center: vec![0.0, 0.0],
                    std_dev: 1.0,
                    count: 20,
                    minority: true,
                },
                BlobSpec {
                    center: vec![5.0, 0.0],
                    std_dev: 1.5,
                    count: 40,
                    minority: false,
                },
            ],
            101,
        )
        .unwrap(),
        make_blob_mixture(
            "split_minority",
            &[
                BlobSpec {
                    center: vec![0.0, 0.0, 0.0],
                    std_dev: 0.6,
                    count: 8,
                    minority: true,
                },
                BlobSpec {
                    center: vec![6.0, 6.0, 0.0],
                    std_dev: 1.8,
                    count: 7,
                    minority: true,
                },
                BlobSpec {
                    center: vec![0.0, 6.0, 3.0],
                    std_dev: 1.2,
                    count: 60,
                    minority: false,
                },
            ],
            102,
        )
        .unwrap(),
        make_blob_mixture(
            "overlapping",
            &[
                BlobSpec {
                    center: vec![0.0; 5],
                    std_dev: 1.5,
                    count: 25,
                    minority: true,
                },
                BlobSpec {
                    center: vec![2.0; 5],
                    std_dev: 1.5,
                    count: 55,
                    minority: false,
                },
            ],
            103,
        )
        .unwrap(),
    ]
}

/// A minority clump far from a dense majority blob, plus one minority
/// outlier planted at the majority's center. Returns the dataset and the
/// outlier's row index.
pub fn planted_outlier_fixture() -> (Dataset, usize) {
    let d = make_blob_mixture(
        "planted_outlier",
        &[
            BlobSpec {
                center: vec![10.0, 10.0],
                std_dev: 0.5,
                count: 12,
                minority: true,
            },
            BlobSpec {
                center: vec![0.0, 0.0],
                std_dev: 1.5,
                count: 60,
                minority: false,
            },
            BlobSpec {
                center: vec![0.0, 0.0],
                std_dev: 0.0,
                count: 1,
                minority: true,
            },
        ],
        104,
    )
    .unwrap();
    // Blobs are laid out in order, so the planted row is the last one.
    let outlier_row = d.n_rows() - 1;
    assert!(d.labels[outlier_row]);
    (d, outlier_row)
}

/// Equal-count dense and sparse minority blobs (spread ratio 3×) plus a
/// distant majority blob, for the quota-allocation checks.
pub fn two_blob_fixture(seed: u64) -> Dataset {
    make_blob_mixture(
        "two_blob",
        &[
            BlobSpec {
                center: vec![0.0, 0.0],
                std_dev: 0.5,
                count: 8,
                minority: true,
            },
            BlobSpec {
                center: vec![40.0, 0.0],
                std_dev: 1.5,
                count: 8,
                minority: true,
            },
            BlobSpec {
                center: vec![20.0, 50.0],
                std_dev: 1.5,
                count: 48,
                minority: false,
            },
        ],
        seed,
    )
    .unwrap()
}

/// Eight synthetic datasets with the class and feature counts of
/// well-known small UCI tables. Each has a dense minority clump, a sparse
/// minority clump (3× spread), a few minority noise rows inside the
/// majority blob, and a majority blob overlapping both clumps.
pub fn table2_suite() -> Vec<Dataset> {
    let shapes: [(&str, usize, usize, usize); 8] = [
        ("breast_tissue", 36, 70, 9),
        ("ecoli", 52, 284, 7),
        ("glass", 70, 144, 9),
        ("haberman", 81, 225, 3),
        ("iris", 50, 100, 4),
        ("pima", 268, 500, 8),
        ("vehicle", 199, 647, 18),
        ("wine", 71, 107, 13),
    ];
    shapes
        .iter()
        .enumerate()
        .map(|(i, &(name, n_min, n_maj, m))| {
            let noise = (n_min / 12).max(2);
            let sparse = (n_min - noise) * 2 / 5;
            let dense = n_min - noise - sparse;
            // Per-coordinate offset keeps between-class contrast roughly
            // constant across dimensionalities.
            let delta = 2.8;
            make_blob_mixture(
                name,
                &[
                    BlobSpec {
                        center: vec![delta; m],
                        std_dev: 0.7,
                        count: dense,
                        minority: true,
                    },
                    BlobSpec {
                        center: vec![-delta; m],
                        std_dev: 2.1,
                        count: sparse,
                        minority: true,
                    },
                    BlobSpec {
                        center: vec![0.0; m],
                        std_dev: 1.0,
                        count: noise,
                        minority: true,
                    },
                    BlobSpec {
                        center: vec![0.0; m],
                        std_dev: 2.0,
                        count: n_maj,
                        minority: false,
                    },
                ],
                1000 + i as u64,
            )
            .unwrap()
        })
        .collect()
}

/// The desk-scale experiment, computed once and shared by the trend and
/// determinism checks. Returns the report and its wall-clock cost.
pub fn desk_report() -> &'static (EvalReport, std::time::Duration) {
    static REPORT: OnceLock<(EvalReport, std::time::Duration)> = OnceLock::new();
    REPORT.get_or_init(|| {
        let start = std::time::Instant::now();
        let report = run_desk_suite();
        (report, start.elapsed())
    })
}

/// One full desk-scale run (fresh computation every call).
pub fn run_desk_suite() -> EvalReport {
    let datasets = table2_suite();
    run_experiment(&datasets, &GridSpec::reduced(), 5, 5, DESK_SEED, None)
        .expect("desk-scale experiment must run")
}
