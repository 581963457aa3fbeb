//! Property checks shared by `properties.rs` and the acceptance harness.
//!
//! Each check runs its own proptest runner with a fixed RNG so that failures
//! reproduce, and returns the failure text instead of panicking.

#![allow(dead_code)]

pub mod recovery;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scalelens::calibration::ece_from_parts;
use scalelens::fairness::{binomial_null_gini, bottom_top_k, gini};
use scalelens::overlap::{
    bootstrap_ci, containment_null, cross_config_overlap, independence_null, jaccard, SeedMask,
};
use scalelens::record::{
    self, error_mask, per_class_accuracy, Corpus, DatasetManifest, ErrorMask, RunRecord,
};
use scalelens::report::{run_report, to_stable_json, ReportOptions};
use scalelens::scaling::{fit_power_law, local_exponents, Metric, ScalingPoint};
use scalelens::spectral::{
    covariance_spectrum, fit_spectral_decay, implied_gamma, predict_alpha, residual_loss_analytic,
    residual_loss_empirical, DataMatrix, EigenSpectrum, SpectrumOptions,
};
use scalelens::synth::{self, SynthKind, SynthSpec};

pub const CASES: u32 = 256;

pub type Check = fn(u32) -> Result<(), String>;

/// Every invariant, by name.
pub const INVARIANTS: &[(&str, Check)] = &[
    (
        "record: serialize/load round trip is bit-exact",
        record_round_trip,
    ),
    (
        "record: error count / n_test + accuracy = 1",
        mask_plus_accuracy_is_one,
    ),
    (
        "record: support-weighted class accuracy = overall",
        weighted_class_accuracy,
    ),
    (
        "scaling: n_params scale changes intercept only",
        n_params_scale_invariance,
    ),
    (
        "scaling: metric^q multiplies alpha by q",
        metric_power_invariance,
    ),
    (
        "scaling: noise-free power law recovered exactly",
        exact_power_law_recovery,
    ),
    (
        "scaling: local exponents of a pure power law equal alpha",
        local_exponents_constant,
    ),
    ("overlap: jaccard is symmetric", jaccard_symmetric),
    (
        "overlap: pair values stay under the containment bound",
        containment_bound_holds,
    ),
    (
        "overlap: independence_null(e, e) = e / (2 - e)",
        independence_null_diagonal,
    ),
    (
        "overlap: bootstrap CI ignores input order",
        bootstrap_order_invariance,
    ),
    (
        "overlap: a shared error never lowers jaccard",
        shared_error_monotonicity,
    ),
    ("fairness: gini is scale invariant", gini_scale_invariance),
    (
        "fairness: gini is permutation invariant",
        gini_permutation_invariance,
    ),
    (
        "fairness: gini of equal halves {0, m} is 0.5",
        gini_two_value,
    ),
    (
        "fairness: bottom-k rises and top-k falls with k",
        bottom_top_monotone,
    ),
    (
        "fairness: binomial null gini falls with class size",
        binomial_null_decreasing,
    ),
    (
        "calibration: matched bins give zero ece",
        ece_zero_when_matched,
    ),
    (
        "calibration: ece ignores sample order",
        ece_permutation_invariance,
    ),
    ("calibration: ece lies in [0, 1]", ece_bounded),
    (
        "calibration: halving every bin never lowers ece",
        ece_refinement,
    ),
    (
        "spectral: eigenvalues preserve total variance",
        trace_preservation,
    ),
    (
        "spectral: spectrum ignores row order",
        spectrum_row_permutation,
    ),
    (
        "spectral: decay fit ignores the spectrum scale",
        spectral_fit_scale_free,
    ),
    (
        "spectral: implied_gamma inverts predict_alpha",
        alpha_gamma_inverse,
    ),
    (
        "spectral: analytic and empirical residual loss agree",
        residual_forms_agree,
    ),
    (
        "synth: identical spec gives identical bytes",
        synth_deterministic,
    ),
    (
        "report: thread count never changes report.json",
        report_thread_independence,
    ),
];

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Random corpus described by a small parameter tuple; all content comes from `seed`.
fn random_corpus(
    n_classes: usize,
    n_per_class: usize,
    n_configs: usize,
    n_seeds: usize,
    seed: u64,
) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let manifest = synth::balanced_manifest("prop", n_classes, n_per_class);
    let mut records = Vec::new();
    for c in 0..n_configs {
        for s in 0..n_seeds {
            let pred_labels = (0..manifest.n_test)
                .map(|_| rng.random_range(0..n_classes as u32))
                .collect();
            let confidences = (0..manifest.n_test)
                .map(|_| match rng.random_range(0..10) {
                    0 => 0.0,
                    1 => 1.0,
                    2 => f64::MIN_POSITIVE * rng.random::<f64>(),
                    _ => rng.random::<f64>(),
                })
                .collect();
            records.push(RunRecord {
                schema_version: record::SCHEMA_VERSION.into(),
                dataset_id: manifest.dataset_id.clone(),
                arch: if c % 2 == 0 {
                    "even".into()
                } else {
                    "odd".into()
                },
                config_id: format!("cfg{c}"),
                width_param: rng.random::<f64>() * 64.0,
                n_params: 1000 * (c as u64 + 1),
                macs: rng.random::<bool>().then(|| rng.random_range(1..u64::MAX)),
                seed: s as i64 - 1,
                pred_labels,
                confidences,
                final_train_loss: rng.random::<bool>().then(|| rng.random::<f64>() * 5.0),
                top5_pred_labels: None,
            });
        }
    }
    Corpus::new(manifest, records).expect("random corpus is valid")
}

fn corpus_strategy() -> impl Strategy<Value = (usize, usize, usize, usize, u64)> {
    (2usize..7, 1usize..9, 1usize..4, 1usize..4, any::<u64>())
}

pub fn record_round_trip(cases: u32) -> Result<(), String> {
    run(cases, corpus_strategy(), |(c, n, k, s, seed)| {
        let corpus = random_corpus(c, n, k, s, seed);
        let dir = tempfile::tempdir().unwrap();
        let (m, r) = (dir.path().join("m.json"), dir.path().join("r.jsonl"));
        corpus.write(&m, &r).unwrap();
        let back = record::load_corpus(&m, &r).unwrap();
        prop_assert_eq!(&back.manifest, &corpus.manifest);
        prop_assert_eq!(back.records.len(), corpus.records.len());
        for (a, b) in back.records.iter().zip(&corpus.records) {
            prop_assert_eq!(a, b);
            for (x, y) in a.confidences.iter().zip(&b.confidences) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        Ok(())
    })
}

pub fn mask_plus_accuracy_is_one(cases: u32) -> Result<(), String> {
    run(cases, corpus_strategy(), |(c, n, k, s, seed)| {
        let corpus = random_corpus(c, n, k, s, seed);
        for r in &corpus.records {
            let mask = error_mask(r, &corpus.manifest);
            let total = mask.n_errors() as f64 / corpus.manifest.n_test as f64
                + r.accuracy(&corpus.manifest);
            prop_assert_eq!(total, 1.0);
            prop_assert_eq!(
                mask.error_rate(),
                mask.n_errors() as f64 / corpus.manifest.n_test as f64
            );
        }
        Ok(())
    })
}

pub fn weighted_class_accuracy(cases: u32) -> Result<(), String> {
    let strategy = (2usize..12, 1usize..30, any::<u64>());
    run(cases, strategy, |(n_classes, n_test, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Unbalanced labels, every class present at least once.
        let mut labels: Vec<u32> = (0..n_classes as u32).collect();
        labels.extend((0..n_test).map(|_| rng.random_range(0..n_classes as u32)));
        labels.shuffle(&mut rng);
        let manifest = DatasetManifest::new("prop", n_classes, labels);
        let preds: Vec<u32> = (0..manifest.n_test)
            .map(|_| rng.random_range(0..n_classes as u32))
            .collect();
        let id = synth::RunIdentity::new("a", "b", 1, 0);
        let mut r = synth::record_from_correctness(
            &manifest,
            &id,
            &vec![true; manifest.n_test],
            vec![0.5; manifest.n_test],
            &mut rng,
        );
        r.pred_labels = preds;
        let pca = per_class_accuracy(&r, &manifest).unwrap();
        let weighted: f64 = pca
            .values
            .iter()
            .zip(&pca.support)
            .map(|(v, &s)| v * s as f64)
            .sum::<f64>()
            / manifest.n_test as f64;
        prop_assert!((weighted - r.accuracy(&manifest)).abs() <= 1e-12);
        Ok(())
    })
}

fn power_law_points(alpha: f64, intercept: f64, sizes: &[u64]) -> Vec<ScalingPoint> {
    sizes
        .iter()
        .map(|&n| ScalingPoint {
            n_params: n,
            metric_value: (intercept - alpha * (n as f64).ln()).exp(),
            seed: 0,
            config_id: format!("n{n}"),
        })
        .collect()
}

fn sizes_strategy() -> impl Strategy<Value = Vec<u64>> {
    proptest::collection::btree_set(1_000u64..50_000_000, 3..10)
        .prop_map(|s| s.into_iter().collect())
}

fn noisy_points_strategy() -> impl Strategy<Value = Vec<ScalingPoint>> {
    (sizes_strategy(), 1usize..4, any::<u64>()).prop_map(|(sizes, seeds, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for &n in &sizes {
            for s in 0..seeds {
                pts.push(ScalingPoint {
                    n_params: n,
                    metric_value: rng.random_range(0.01..1.0),
                    seed: s as i64,
                    config_id: format!("n{n}"),
                });
            }
        }
        pts
    })
}

pub fn n_params_scale_invariance(cases: u32) -> Result<(), String> {
    run(cases, (noisy_points_strategy(), 2u64..1000), |(pts, c)| {
        let base = fit_power_law(&pts, Metric::ErrorRate).unwrap();
        let scaled: Vec<ScalingPoint> = pts
            .iter()
            .map(|p| ScalingPoint {
                n_params: p.n_params * c,
                ..p.clone()
            })
            .collect();
        let f = fit_power_law(&scaled, Metric::ErrorRate).unwrap();
        prop_assert!(
            (f.alpha - base.alpha).abs() <= 1e-10,
            "{} vs {}",
            f.alpha,
            base.alpha
        );
        prop_assert!((f.r_squared - base.r_squared).abs() <= 1e-10);
        prop_assert!(close(
            f.intercept,
            base.intercept + base.alpha * (c as f64).ln(),
            1e-9
        ));
        Ok(())
    })
}

/// Pooling averages seeds arithmetically, and `mean(m^q) != mean(m)^q`, so
/// the exact statement holds for per-seed fits and for single-seed pooled fits.
pub fn metric_power_invariance(cases: u32) -> Result<(), String> {
    run(cases, (noisy_points_strategy(), 0.1f64..5.0), |(pts, q)| {
        let base = fit_power_law(&pts, Metric::TrainLoss).unwrap();
        let powered: Vec<ScalingPoint> = pts
            .iter()
            .map(|p| ScalingPoint {
                metric_value: p.metric_value.powf(q),
                ..p.clone()
            })
            .collect();
        let f = fit_power_law(&powered, Metric::TrainLoss).unwrap();
        let (a, b) = (base.per_seed.unwrap(), f.per_seed.unwrap());
        for (x, y) in a.alphas.iter().zip(&b.alphas) {
            prop_assert!(close(*y, q * x, 1e-10), "per-seed {y} vs {}", q * x);
        }
        if a.alphas.len() == 1 {
            prop_assert!(
                close(f.alpha, q * base.alpha, 1e-10),
                "{} vs {}",
                f.alpha,
                q * base.alpha
            );
        }
        Ok(())
    })
}

pub fn exact_power_law_recovery(cases: u32) -> Result<(), String> {
    run(
        cases,
        (sizes_strategy(), 0.01f64..1.0, -1.0f64..3.0),
        |(sizes, alpha, intercept)| {
            let f = fit_power_law(
                &power_law_points(alpha, intercept, &sizes),
                Metric::TrainLoss,
            )
            .unwrap();
            prop_assert!((f.alpha - alpha).abs() <= 1e-10);
            prop_assert!(f.r_squared >= 1.0 - 1e-12);
            Ok(())
        },
    )
}

pub fn local_exponents_constant(cases: u32) -> Result<(), String> {
    run(
        cases,
        (sizes_strategy(), 0.01f64..1.0, -1.0f64..3.0),
        |(sizes, alpha, intercept)| {
            for l in local_exponents(&power_law_points(alpha, intercept, &sizes)).unwrap() {
                prop_assert!(
                    (l.alpha_local - alpha).abs() <= 1e-9,
                    "{} vs {alpha}",
                    l.alpha_local
                );
            }
            Ok(())
        },
    )
}

fn mask_pair_strategy() -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
    (1usize..300).prop_flat_map(|n| {
        (
            proptest::collection::vec(proptest::bool::weighted(0.4), n),
            proptest::collection::vec(proptest::bool::weighted(0.3), n),
        )
    })
}

fn mask(bits: &[bool]) -> ErrorMask {
    ErrorMask::from_indices(
        bits.len(),
        bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i),
    )
}

pub fn jaccard_symmetric(cases: u32) -> Result<(), String> {
    run(cases, mask_pair_strategy(), |(a, b)| {
        let (a, b) = (mask(&a), mask(&b));
        prop_assert_eq!(jaccard(&a, &b).unwrap(), jaccard(&b, &a).unwrap());
        Ok(())
    })
}

pub fn containment_bound_holds(cases: u32) -> Result<(), String> {
    let strategy = (1usize..200, 1usize..4, 1usize..4, any::<u64>());
    run(cases, strategy, |(n, seeds_a, seeds_b, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pa = rng.random::<f64>();
        let pb = rng.random::<f64>();
        let mut runs = |p: f64, k: usize| -> Vec<SeedMask> {
            (0..k)
                .map(|s| SeedMask {
                    seed: s as i64,
                    mask: ErrorMask::from_indices(n, (0..n).filter(|_| rng.random::<f64>() < p)),
                })
                .collect()
        };
        let (ra, rb) = (runs(pa, seeds_a), runs(pb, seeds_b));
        for x in &ra {
            for y in &rb {
                let (ea, eb) = (x.mask.error_rate(), y.mask.error_rate());
                if ea > 0.0 && eb > 0.0 {
                    let j = jaccard(&x.mask, &y.mask).unwrap();
                    prop_assert!(j <= containment_null(ea, eb).unwrap() + 1e-12);
                }
            }
        }
        let summary = cross_config_overlap("a", &ra, "b", &rb).unwrap();
        prop_assert!(summary.pair_values.iter().all(|v| (0.0..=1.0).contains(v)));
        if let (Some(i), Some(c)) = (summary.indep_null, summary.containment_null) {
            if summary.error_rate_a != summary.error_rate_b {
                prop_assert!(i <= c + 1e-15);
            }
        }
        Ok(())
    })
}

pub fn independence_null_diagonal(cases: u32) -> Result<(), String> {
    run(cases, 1e-9f64..=1.0, |e| {
        prop_assert!((independence_null(e, e).unwrap() - e / (2.0 - e)).abs() <= 1e-15);
        Ok(())
    })
}

pub fn bootstrap_order_invariance(cases: u32) -> Result<(), String> {
    let strategy = (
        proptest::collection::vec(0.0f64..1.0, 2..40),
        any::<u64>(),
        any::<u64>(),
    );
    run(cases, strategy, |(values, seed, shuffle)| {
        let mut shuffled = values.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        prop_assert_eq!(
            bootstrap_ci(&values, 1000, seed).unwrap(),
            bootstrap_ci(&shuffled, 1000, seed).unwrap()
        );
        Ok(())
    })
}

pub fn shared_error_monotonicity(cases: u32) -> Result<(), String> {
    run(
        cases,
        (mask_pair_strategy(), any::<prop::sample::Index>()),
        |((a, b), idx)| {
            let i = idx.index(a.len());
            let (ma, mb) = (mask(&a), mask(&b));
            if ma.n_errors() + mb.n_errors() == 0 {
                return Ok(());
            }
            let before = jaccard(&ma, &mb).unwrap();
            let (mut ma2, mut mb2) = (ma.clone(), mb.clone());
            ma2.set_wrong(i);
            mb2.set_wrong(i);
            prop_assert!(jaccard(&ma2, &mb2).unwrap() >= before);
            Ok(())
        },
    )
}

fn accuracies() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, 2..120)
        .prop_filter("not all zero", |v| v.iter().any(|&x| x > 0.0))
}

pub fn gini_scale_invariance(cases: u32) -> Result<(), String> {
    run(cases, (accuracies(), 1e-3f64..1e3), |(v, c)| {
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        prop_assert!((gini(&scaled).unwrap() - gini(&v).unwrap()).abs() <= 1e-12);
        Ok(())
    })
}

pub fn gini_permutation_invariance(cases: u32) -> Result<(), String> {
    run(cases, (accuracies(), any::<u64>()), |(v, seed)| {
        let mut p = v.clone();
        p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let g = gini(&v).unwrap();
        prop_assert_eq!(gini(&p).unwrap(), g);
        prop_assert!((0.0..1.0).contains(&g));
        Ok(())
    })
}

pub fn gini_two_value(cases: u32) -> Result<(), String> {
    run(cases, (1usize..500, 1e-6f64..1e6), |(half, m)| {
        let mut v = vec![0.0; half];
        v.extend(std::iter::repeat(m).take(half));
        prop_assert_eq!(gini(&v).unwrap(), 0.5);
        Ok(())
    })
}

pub fn bottom_top_monotone(cases: u32) -> Result<(), String> {
    run(
        cases,
        proptest::collection::vec(0.0f64..=1.0, 20..120),
        |values| {
            let pca = record::PerClassAccuracy {
                support: vec![1; values.len()],
                values,
            };
            let (b5, t5) = bottom_top_k(&pca, 5).unwrap();
            let (b10, t10) = bottom_top_k(&pca, 10).unwrap();
            let (b20, t20) = bottom_top_k(&pca, 20).unwrap();
            let eps = 1e-12;
            prop_assert!(b5 <= b10 + eps && b10 <= b20 + eps);
            prop_assert!(t5 + eps >= t10 && t10 + eps >= t20);
            prop_assert!(b20 <= t20 + eps);
            Ok(())
        },
    )
}

/// Grid check; `cases` only sets how many seeds are tried.
pub fn binomial_null_decreasing(cases: u32) -> Result<(), String> {
    let sizes = [25u64, 50, 100, 200, 400];
    for seed in 0..(cases as u64 / 64).max(1) {
        for p in [0.2, 0.42, 0.75, 0.9] {
            let means: Vec<f64> = sizes
                .iter()
                .map(|&n| binomial_null_gini(p, 100, n, 2000, seed).unwrap().0)
                .collect();
            if means.windows(2).any(|w| w[1] >= w[0]) {
                return Err(format!(
                    "p = {p}, seed {seed}: null gini not decreasing in class size: {means:?}"
                ));
            }
        }
    }
    Ok(())
}

/// Groups of samples whose confidence equals their group's accuracy.
fn matched_groups() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    proptest::collection::vec((1usize..30, any::<prop::sample::Index>()), 1..12).prop_map(
        |groups| {
            let mut correct = Vec::new();
            let mut conf = Vec::new();
            for (n, idx) in groups {
                let c = idx.index(n + 1);
                correct.extend((0..n).map(|i| i < c));
                conf.extend(std::iter::repeat(c as f64 / n as f64).take(n));
            }
            (correct, conf)
        },
    )
}

fn calibration_data() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (1usize..400).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0], n),
        )
    })
}

pub fn ece_zero_when_matched(cases: u32) -> Result<(), String> {
    run(
        cases,
        (matched_groups(), 1usize..40),
        |((correct, conf), bins)| {
            let e = ece_from_parts(&correct, &conf, bins).unwrap().ece;
            prop_assert!(e.abs() <= 1e-12, "ece = {e}");
            Ok(())
        },
    )
}

pub fn ece_permutation_invariance(cases: u32) -> Result<(), String> {
    run(
        cases,
        (calibration_data(), any::<u64>()),
        |((correct, conf), seed)| {
            let mut order: Vec<usize> = (0..correct.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let pc: Vec<bool> = order.iter().map(|&i| correct[i]).collect();
            let pf: Vec<f64> = order.iter().map(|&i| conf[i]).collect();
            let a = ece_from_parts(&correct, &conf, 15).unwrap().ece;
            let b = ece_from_parts(&pc, &pf, 15).unwrap().ece;
            prop_assert!((a - b).abs() <= 1e-12);
            Ok(())
        },
    )
}

pub fn ece_bounded(cases: u32) -> Result<(), String> {
    run(
        cases,
        (calibration_data(), 1usize..50),
        |((correct, conf), bins)| {
            let s = ece_from_parts(&correct, &conf, bins).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.ece));
            prop_assert_eq!(
                s.bin_stats.iter().map(|b| b.count).sum::<usize>(),
                correct.len()
            );
            Ok(())
        },
    )
}

pub fn ece_refinement(cases: u32) -> Result<(), String> {
    run(
        cases,
        (calibration_data(), 1usize..30),
        |((correct, conf), bins)| {
            let coarse = ece_from_parts(&correct, &conf, bins).unwrap().ece;
            let fine = ece_from_parts(&correct, &conf, 2 * bins).unwrap().ece;
            prop_assert!(fine >= coarse - 1e-12, "{fine} < {coarse}");
            Ok(())
        },
    )
}

fn matrix_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2usize..30, 1usize..12).prop_flat_map(|(n, p)| {
        (
            Just(n),
            Just(p),
            proptest::collection::vec(-10.0f64..10.0, n * p),
        )
    })
}

pub fn trace_preservation(cases: u32) -> Result<(), String> {
    run(
        cases,
        (matrix_strategy(), any::<bool>()),
        |((n, p, data), svd)| {
            let m = DataMatrix::from_row_major(n, p, data.clone()).unwrap();
            let opts = SpectrumOptions {
                direct_max_features: if svd { 0 } else { p },
            };
            let s = covariance_spectrum(&m, opts).unwrap();
            let variances: f64 = (0..p)
                .map(|j| {
                    let col: Vec<f64> = (0..n).map(|i| data[i * p + j]).collect();
                    let mean = col.iter().sum::<f64>() / n as f64;
                    col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0)
                })
                .sum();
            prop_assert!(
                close(s.total_variance(), variances, 1e-8),
                "{} vs {variances}",
                s.total_variance()
            );
            prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(s.len() <= n.min(p));
            Ok(())
        },
    )
}

pub fn spectrum_row_permutation(cases: u32) -> Result<(), String> {
    run(
        cases,
        (matrix_strategy(), any::<u64>()),
        |((n, p, data), seed)| {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<f64> = rows
                .iter()
                .flat_map(|&i| data[i * p..(i + 1) * p].iter().copied())
                .collect();
            let a = covariance_spectrum(
                &DataMatrix::from_row_major(n, p, data).unwrap(),
                SpectrumOptions::default(),
            )
            .unwrap();
            let b = covariance_spectrum(
                &DataMatrix::from_row_major(n, p, permuted).unwrap(),
                SpectrumOptions::default(),
            )
            .unwrap();
            let scale = a.eigenvalues.first().copied().unwrap_or(0.0).max(1.0);
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                prop_assert!((x - y).abs() <= 1e-9 * scale);
            }
            Ok(())
        },
    )
}

pub fn spectral_fit_scale_free(cases: u32) -> Result<(), String> {
    run(cases, (0.2f64..4.0, -20.0f64..20.0), |(beta, log_c)| {
        let s = EigenSpectrum::power_law(beta, log_c.exp(), 600);
        let f = fit_spectral_decay(&s, 10, 500).unwrap();
        prop_assert!((f.beta - beta).abs() <= 1e-9);
        prop_assert!((f.intercept - log_c).abs() <= 1e-8);
        Ok(())
    })
}

pub fn alpha_gamma_inverse(cases: u32) -> Result<(), String> {
    run(cases, (1.0001f64..4.0, 1e-3f64..0.999), |(beta, gamma)| {
        let alpha = predict_alpha(beta, gamma).unwrap();
        prop_assert!((implied_gamma(alpha, beta).unwrap() - gamma).abs() <= 1e-12);
        Ok(())
    })
}

/// Exact power-law spectra long enough that truncating the tail costs < 1%.
pub fn residual_forms_agree(cases: u32) -> Result<(), String> {
    const LEN: usize = 1 << 20;
    run(cases, (1.5f64..2.5, 20usize..200), |(beta, k)| {
        let s = EigenSpectrum::power_law(beta, 1.0, LEN);
        let a = residual_loss_analytic(beta, k as f64).unwrap().value;
        let e = residual_loss_empirical(&s, k as f64).unwrap().value;
        prop_assert!((a - e).abs() <= 0.05 * a, "analytic {a}, empirical {e}");
        Ok(())
    })
}

fn synth_spec_strategy() -> impl Strategy<Value = SynthSpec> {
    let kind = prop_oneof![
        (0.02f64..0.5, 0.0f64..0.05, 1usize..3).prop_map(|(alpha, noise, seeds)| {
            SynthKind::PowerLawCurve {
                alpha,
                intercept: alpha * 1000f64.ln() - 0.7,
                noise_sigma: noise,
                sizes: vec![1000, 4000, 16000],
                n_seeds: seeds,
                n_classes: 3,
                n_per_class: 20,
            }
        }),
        (0.05f64..0.4, 0.05f64..0.4, 0.0f64..0.3).prop_map(|(e_a, e_b, j)| {
            SynthKind::OverlapMasks {
                n_classes: 4,
                n_per_class: 50,
                e_a,
                e_b,
                target_jaccard: j * e_a.min(e_b) / e_a.max(e_b),
            }
        }),
        (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, c)| SynthKind::CalibrationProfile {
            n_classes: 2,
            n_per_class: 30,
            bin_accuracies: vec![a, 1.0 - a],
            bin_confidences: vec![c, 1.0 - c],
            bin_weights: vec![0.4, 0.6],
        }),
        (0.5f64..2.5).prop_map(|beta| SynthKind::PlantedSpectrum {
            beta,
            n_features: 6,
            n_samples: 10,
        }),
        (0.05f64..0.95).prop_map(|p| SynthKind::BinomialClasses {
            p,
            n_classes: 5,
            n_per_class: 7,
        }),
    ];
    (kind, any::<u64>()).prop_map(|(kind, seed)| SynthSpec { kind, seed })
}

fn synth_bytes(spec: &SynthSpec) -> Vec<u8> {
    match spec.generate().unwrap() {
        synth::SynthOutput::Corpus(c) => {
            let mut out = serde_json::to_vec(&c.manifest).unwrap();
            for r in &c.records {
                out.extend(serde_json::to_vec(r).unwrap());
            }
            out
        }
        synth::SynthOutput::Matrix(m) => {
            m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
        }
    }
}

pub fn synth_deterministic(cases: u32) -> Result<(), String> {
    run(cases, synth_spec_strategy(), |spec| {
        prop_assert_eq!(synth_bytes(&spec), synth_bytes(&spec));
        Ok(())
    })
}

pub fn report_thread_independence(cases: u32) -> Result<(), String> {
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap();
    run(
        cases,
        (0.05f64..0.4, 2usize..4, any::<u64>()),
        |(alpha, seeds, seed)| {
            let points =
                synth::gen_power_law_runs(alpha, -0.3, 0.05, &[1000, 5000, 25000], seeds, seed)
                    .unwrap();
            let manifest = synth::balanced_manifest("prop", 4, 25);
            let corpus = synth::points_to_corpus(&points, "arch", manifest, seed).unwrap();
            let options = ReportOptions {
                seed,
                bootstrap_resamples: 1000,
                null_trials: 1000,
                ..ReportOptions::default()
            };
            let a = one.install(|| to_stable_json(&run_report(&corpus, &options, None).unwrap()));
            let b = many.install(|| to_stable_json(&run_report(&corpus, &options, None).unwrap()));
            prop_assert_eq!(a, b);
            Ok(())
        },
    )
}
