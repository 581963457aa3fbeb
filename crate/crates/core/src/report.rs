//! Full-corpus report: every analysis over every configuration, plus the
//! plot-ready CSV tables and a key-sorted `report.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::calibration::{self, CalibrationSummary};
use crate::error::{Error, Result};
use crate::fairness::{self, FairnessSummary, Ranking};
use crate::overlap::{self, OverlapSummary, SeedMask};
use crate::record::{self, ConfigGroup, Corpus};
use crate::scaling::{
    self, ExponentComparison, Metric, SaturationLabel, SaturationThresholds, ScalingFit,
};
use crate::spectral::SpectralFit;
use crate::stats::{self, derive_seed, round_sig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Significant digits of every float written to report outputs.
pub const REPORT_DIGITS: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub seed: u64,
    pub n_bins: usize,
    pub bootstrap_resamples: usize,
    pub null_trials: usize,
    pub thresholds: SaturationThresholds,
    pub ranking: Ranking,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            seed: 0,
            n_bins: calibration::DEFAULT_BINS,
            bootstrap_resamples: 10_000,
            null_trials: 10_000,
            thresholds: SaturationThresholds::default(),
            ranking: Ranking::PerSeed,
        }
    }
}

/// Conventions needed to reproduce every number in a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub seed: u64,
    pub prng: String,
    pub log_base: String,
    pub pooled_fit: String,
    pub t_test: String,
    pub bin_rule: String,
    pub n_bins: usize,
    pub bootstrap: String,
    pub bootstrap_resamples: usize,
    pub null_trials: usize,
    pub null_n_per_class: u64,
    pub manifest_balanced: bool,
    pub gini_formula: String,
    pub ranking: Ranking,
    pub thresholds: SaturationThresholds,
    pub tie_rule: String,
}

/// One row of the Table-2-shaped summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRow {
    pub arch: String,
    pub config_id: String,
    pub width_param: f64,
    pub n_params: u64,
    pub macs: Option<u64>,
    pub n_seeds: usize,
    /// Percent.
    pub acc_mean: f64,
    pub acc_std: Option<f64>,
    pub err_mean: f64,
    pub err_std: Option<f64>,
    pub ece_mean: f64,
    pub ece_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExponentRow {
    pub arch: String,
    pub config_lo: String,
    pub config_hi: String,
    pub n_lo: u64,
    pub n_hi: u64,
    pub alpha_local: f64,
    pub per_seed_values: Vec<f64>,
    pub label: SaturationLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchScaling {
    pub arch: String,
    pub error_fit: Option<ScalingFit>,
    pub train_loss_fit: Option<ScalingFit>,
    pub local_exponents: Vec<LocalExponentRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchComparison {
    pub arch_a: String,
    pub arch_b: String,
    pub result: ExponentComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    /// `arch:config_id` in corpus order.
    pub labels: Vec<String>,
    /// Mean Jaccard; the diagonal holds the cross-seed baseline (absent with one seed).
    pub mean: Vec<Vec<Option<f64>>>,
    pub baselines: Vec<OverlapSummary>,
    pub pairs: Vec<OverlapSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniDifference {
    pub arch: String,
    pub config_small: String,
    pub config_large: String,
    pub difference: f64,
    pub ci95: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub arch: String,
    pub config_id: String,
    pub n_params: u64,
    pub ece_mean: f64,
    pub ece_std: Option<f64>,
    pub global_conf: f64,
    pub global_acc: f64,
    pub global_gap: f64,
    pub mean_conf_correct: Option<f64>,
    pub mean_conf_incorrect: Option<f64>,
    pub per_seed: Vec<SeedCalibration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedCalibration {
    pub seed: i64,
    pub summary: CalibrationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub tool_version: String,
    pub corpus_fingerprint: String,
    pub conventions: Conventions,
    /// Analyses whose preconditions the corpus does not meet.
    pub skipped: Vec<String>,
    pub table: Vec<ConfigRow>,
    pub scaling: Vec<ArchScaling>,
    pub exponent_comparisons: Vec<ArchComparison>,
    pub overlap: OverlapMatrix,
    pub fairness: Vec<FairnessSummary>,
    pub gini_differences: Vec<GiniDifference>,
    pub calibration: Vec<CalibrationRow>,
    pub spectral: Option<SpectralFit>,
}

/// SHA-256 over the manifest and the key-sorted records in canonical JSON.
pub fn corpus_fingerprint(corpus: &Corpus) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&corpus.manifest).expect("manifest serializes"));
    let mut order: Vec<usize> = (0..corpus.records.len()).collect();
    order.sort_by_key(|&i| corpus.records[i].key());
    for i in order {
        hasher.update(b"\n");
        hasher.update(serde_json::to_vec(&corpus.records[i]).expect("record serializes"));
    }
    hasher.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Per-run derived quantities, computed once.
struct RunData {
    seed: i64,
    mask: record::ErrorMask,
    per_class: record::PerClassAccuracy,
    calibration: CalibrationSummary,
}

fn seed_masks(runs: &[RunData]) -> Vec<SeedMask> {
    runs.iter()
        .map(|r| SeedMask {
            seed: r.seed,
            mask: r.mask.clone(),
        })
        .collect()
}

fn compute_run_data(corpus: &Corpus, n_bins: usize) -> Result<Vec<Vec<RunData>>> {
    let manifest = &corpus.manifest;
    corpus
        .configs()
        .par_iter()
        .map(|g| {
            corpus
                .runs(g)
                .map(|r| {
                    Ok(RunData {
                        seed: r.seed,
                        mask: record::error_mask(r, manifest),
                        per_class: record::per_class_accuracy(r, manifest)?,
                        calibration: calibration::ece(r, manifest, n_bins)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Scaling analyses: power-law fits, local exponents and exponent comparisons.
///
/// Architectures with too few sizes for a fit are noted in `skipped`.
pub fn scaling_section(
    corpus: &Corpus,
    thresholds: SaturationThresholds,
    skipped: &mut Vec<String>,
) -> Result<(Vec<ArchScaling>, Vec<ArchComparison>)> {
    let groups = corpus.configs();
    let mut scaling_out = Vec::new();
    for arch in corpus.archs() {
        let n_sizes = groups.iter().filter(|g| g.arch == arch).count();
        let err_points = scaling::corpus_points(corpus, arch, Metric::ErrorRate);
        let error_fit = if n_sizes >= 3 {
            Some(scaling::fit_power_law(&err_points, Metric::ErrorRate)?)
        } else {
            skipped.push(format!(
                "{arch}: power-law fit needs 3 model sizes, corpus has {n_sizes}"
            ));
            None
        };
        let loss_points = scaling::corpus_points(corpus, arch, Metric::TrainLoss);
        let loss_configs = loss_points
            .iter()
            .map(|p| &p.config_id)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        let train_loss_fit = if loss_configs >= 3 {
            Some(scaling::fit_power_law(&loss_points, Metric::TrainLoss)?)
        } else {
            skipped.push(format!(
                "{arch}: training-loss fit needs 3 model sizes with final_train_loss"
            ));
            None
        };
        let local_exponents = if n_sizes >= 2 {
            scaling::local_exponents(&err_points)?
                .into_iter()
                .map(|l| LocalExponentRow {
                    arch: arch.to_string(),
                    label: thresholds.label(l.alpha_local),
                    config_lo: l.config_lo,
                    config_hi: l.config_hi,
                    n_lo: l.n_lo,
                    n_hi: l.n_hi,
                    alpha_local: l.alpha_local,
                    per_seed_values: l.per_seed_values,
                })
                .collect()
        } else {
            skipped.push(format!("{arch}: local exponents need 2 model sizes"));
            Vec::new()
        };
        scaling_out.push(ArchScaling {
            arch: arch.to_string(),
            error_fit,
            train_loss_fit,
            local_exponents,
        });
    }

    let mut comparisons = Vec::new();
    for (i, a) in scaling_out.iter().enumerate() {
        for b in &scaling_out[i + 1..] {
            let (Some(fa), Some(fb)) = (&a.error_fit, &b.error_fit) else {
                continue;
            };
            let enough = |f: &ScalingFit| f.per_seed.as_ref().is_some_and(|p| p.alphas.len() >= 2);
            if enough(fa) && enough(fb) {
                comparisons.push(ArchComparison {
                    arch_a: a.arch.clone(),
                    arch_b: b.arch.clone(),
                    result: scaling::compare_exponents(fa, fb)?,
                });
            }
        }
    }
    Ok((scaling_out, comparisons))
}

/// Mean-Jaccard matrix over every configuration pair, with bootstrap intervals.
pub fn overlap_section(
    corpus: &Corpus,
    bootstrap_resamples: usize,
    seed: u64,
) -> Result<OverlapMatrix> {
    let run_data = compute_run_data(corpus, calibration::DEFAULT_BINS)?;
    overlap_matrix(corpus.configs(), &run_data, bootstrap_resamples, seed)
}

/// Average test examples per class, used as the binomial-null sample size.
pub fn null_n_per_class(corpus: &Corpus) -> u64 {
    (corpus.manifest.n_test as f64 / corpus.manifest.n_classes as f64).round() as u64
}

/// Fairness summaries per configuration and the smallest-vs-largest Gini
/// difference per architecture.
pub fn fairness_section(
    corpus: &Corpus,
    options: &ReportOptions,
    skipped: &mut Vec<String>,
) -> Result<(Vec<FairnessSummary>, Vec<GiniDifference>)> {
    let run_data = compute_run_data(corpus, options.n_bins)?;
    fairness_from_runs(corpus, &run_data, options, skipped)
}

fn fairness_from_runs(
    corpus: &Corpus,
    run_data: &[Vec<RunData>],
    options: &ReportOptions,
    skipped: &mut Vec<String>,
) -> Result<(Vec<FairnessSummary>, Vec<GiniDifference>)> {
    let groups = corpus.configs();
    let n_classes = corpus.manifest.n_classes;
    let n_per_class = null_n_per_class(corpus);
    let reference_order = match &options.ranking {
        Ranking::Reference { arch, config_id } => {
            let idx = groups
                .iter()
                .position(|g| &g.arch == arch && &g.config_id == config_id)
                .ok_or_else(|| {
                    Error::invalid(format!("reference config {arch}:{config_id} not in corpus"))
                })?;
            let runs = &run_data[idx];
            let mean: Vec<f64> = (0..n_classes)
                .map(|c| {
                    runs.iter().map(|r| r.per_class.values[c]).sum::<f64>() / runs.len() as f64
                })
                .collect();
            Some(fairness::difficulty_order(&mean))
        }
        _ => None,
    };
    let summaries: Vec<FairnessSummary> = groups
        .par_iter()
        .zip(run_data)
        .enumerate()
        .map(|(i, (g, runs))| {
            let pcas: Vec<_> = runs.iter().map(|r| r.per_class.clone()).collect();
            fairness::summarize_config(
                &g.arch,
                &g.config_id,
                g.n_params,
                &pcas,
                &options.ranking,
                reference_order.as_deref(),
                n_per_class,
                options.null_trials,
                derive_seed(options.seed, 0x6a_0000 + i as u64),
            )
        })
        .collect::<Result<_>>()?;

    let mut differences = Vec::new();
    for arch in corpus.archs() {
        let idx: Vec<usize> = (0..groups.len())
            .filter(|&i| groups[i].arch == arch)
            .collect();
        if idx.len() < 2 {
            continue;
        }
        let (small, large) = (&summaries[idx[0]], &summaries[idx[idx.len() - 1]]);
        if small.per_seed_ginis.len() < 2 || large.per_seed_ginis.len() < 2 {
            skipped.push(format!("{arch}: Gini difference CI needs 2 seeds per side"));
            continue;
        }
        differences.push(GiniDifference {
            arch: arch.to_string(),
            config_small: small.config_id.clone(),
            config_large: large.config_id.clone(),
            difference: small.gini_mean - large.gini_mean,
            ci95: fairness::gini_difference_ci(
                &small.per_seed_ginis,
                &large.per_seed_ginis,
                options.bootstrap_resamples,
                derive_seed(options.seed, 0x61_0000 + idx[0] as u64),
            )?,
        });
    }
    Ok((summaries, differences))
}

/// Per-configuration calibration, including every seed's reliability bins.
pub fn calibration_section(corpus: &Corpus, n_bins: usize) -> Result<Vec<CalibrationRow>> {
    let run_data = compute_run_data(corpus, n_bins)?;
    Ok(corpus
        .configs()
        .iter()
        .zip(&run_data)
        .map(|(g, runs)| calibration_row(g, runs, corpus.manifest.n_test))
        .collect())
}

/// Conventions block for `options` applied to `corpus`.
pub fn conventions(corpus: &Corpus, options: &ReportOptions) -> Conventions {
    Conventions {
        seed: options.seed,
        prng: stats::PRNG_NAME.to_string(),
        log_base: "natural".into(),
        pooled_fit: "OLS of ln(metric) on ln(n_params) over seed-mean points; per-seed OLS for uncertainty".into(),
        t_test: "pooled-variance two-sample Student t-test on per-seed exponents, two-sided".into(),
        bin_rule: calibration::BIN_RULE.to_string(),
        n_bins: options.n_bins,
        bootstrap: overlap::BOOTSTRAP_METHOD.to_string(),
        bootstrap_resamples: options.bootstrap_resamples,
        null_trials: options.null_trials,
        null_n_per_class: null_n_per_class(corpus),
        manifest_balanced: corpus.manifest.is_balanced(),
        gini_formula: "sum_ij |x_i - x_j| / (2 n^2 mean)".into(),
        ranking: options.ranking.clone(),
        thresholds: options.thresholds,
        tie_rule: "class ties broken by class index ascending; alpha_local on a threshold takes the lower label".into(),
    }
}

/// Run every analysis over `corpus`.
///
/// All parallel work draws randomness from per-task streams and is merged in
/// corpus order, so the bundle is identical for any rayon pool size.
pub fn run_report(
    corpus: &Corpus,
    options: &ReportOptions,
    spectral: Option<SpectralFit>,
) -> Result<ReportBundle> {
    let manifest = &corpus.manifest;
    let groups = corpus.configs();
    let mut skipped = Vec::new();

    let run_data = compute_run_data(corpus, options.n_bins)?;
    let table: Vec<ConfigRow> = groups
        .iter()
        .zip(&run_data)
        .map(|(g, runs)| config_row(g, runs))
        .collect();
    let (scaling, exponent_comparisons) =
        scaling_section(corpus, options.thresholds, &mut skipped)?;
    let overlap = overlap_matrix(groups, &run_data, options.bootstrap_resamples, options.seed)?;
    let (fairness, gini_differences) =
        fairness_from_runs(corpus, &run_data, options, &mut skipped)?;
    let calibration = groups
        .iter()
        .zip(&run_data)
        .map(|(g, runs)| calibration_row(g, runs, manifest.n_test))
        .collect();

    if !manifest.is_balanced() {
        let support = manifest.class_support();
        skipped.push(format!(
            "manifest is not class-balanced (support {}..{}); binomial null uses the average {} per class",
            support.iter().min().unwrap(),
            support.iter().max().unwrap(),
            null_n_per_class(corpus)
        ));
    }

    Ok(ReportBundle {
        tool_version: TOOL_VERSION.to_string(),
        corpus_fingerprint: corpus_fingerprint(corpus),
        conventions: conventions(corpus, options),
        skipped,
        table,
        scaling,
        exponent_comparisons,
        overlap,
        fairness,
        gini_differences,
        calibration,
        spectral,
    })
}

fn config_row(g: &ConfigGroup, runs: &[RunData]) -> ConfigRow {
    let accs: Vec<f64> = runs
        .iter()
        .map(|r| 100.0 * (1.0 - r.mask.error_rate()))
        .collect();
    let errs: Vec<f64> = runs.iter().map(|r| r.mask.error_rate()).collect();
    let eces: Vec<f64> = runs.iter().map(|r| r.calibration.ece).collect();
    ConfigRow {
        arch: g.arch.clone(),
        config_id: g.config_id.clone(),
        width_param: g.width_param,
        n_params: g.n_params,
        macs: g.macs,
        n_seeds: runs.len(),
        acc_mean: stats::mean(&accs),
        acc_std: stats::sample_std(&accs),
        err_mean: stats::mean(&errs),
        err_std: stats::sample_std(&errs),
        ece_mean: stats::mean(&eces),
        ece_std: stats::sample_std(&eces),
    }
}

fn calibration_row(g: &ConfigGroup, runs: &[RunData], n_test: usize) -> CalibrationRow {
    let eces: Vec<f64> = runs.iter().map(|r| r.calibration.ece).collect();
    let avg = |f: &dyn Fn(&CalibrationSummary) -> f64| {
        runs.iter().map(|r| f(&r.calibration)).sum::<f64>() / runs.len() as f64
    };
    // Pool the per-seed side means weighted by how many samples each side had.
    let pooled_side = |pick: &dyn Fn(&CalibrationSummary) -> Option<f64>, correct_side: bool| {
        let (mut sum, mut count) = (0.0, 0.0);
        for r in runs {
            if let Some(m) = pick(&r.calibration) {
                let n_side = if correct_side {
                    r.calibration.global_acc * n_test as f64
                } else {
                    (1.0 - r.calibration.global_acc) * n_test as f64
                };
                sum += m * n_side;
                count += n_side;
            }
        }
        (count > 0.0).then(|| sum / count)
    };
    let global_conf = avg(&|c| c.global_conf);
    let global_acc = avg(&|c| c.global_acc);
    CalibrationRow {
        arch: g.arch.clone(),
        config_id: g.config_id.clone(),
        n_params: g.n_params,
        ece_mean: stats::mean(&eces),
        ece_std: stats::sample_std(&eces),
        global_conf,
        global_acc,
        global_gap: (global_conf - global_acc).abs(),
        mean_conf_correct: pooled_side(&|c| c.mean_conf_correct, true),
        mean_conf_incorrect: pooled_side(&|c| c.mean_conf_incorrect, false),
        per_seed: runs
            .iter()
            .map(|r| SeedCalibration {
                seed: r.seed,
                summary: r.calibration.clone(),
            })
            .collect(),
    }
}

fn overlap_matrix(
    groups: &[ConfigGroup],
    run_data: &[Vec<RunData>],
    bootstrap_resamples: usize,
    seed: u64,
) -> Result<OverlapMatrix> {
    let n = groups.len();
    let masks: Vec<Vec<SeedMask>> = run_data.iter().map(|r| seed_masks(r)).collect();
    let labels: Vec<String> = groups.iter().map(|g| g.label()).collect();

    let baselines: Vec<Option<OverlapSummary>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if masks[i].len() < 2 {
                return Ok(None);
            }
            let s = overlap::cross_seed_baseline(&labels[i], &masks[i])?;
            let s = if s.n_pairs >= 2 {
                s.with_bootstrap(bootstrap_resamples, derive_seed(seed, 0x0b_0000 + i as u64))?
            } else {
                s
            };
            Ok(Some(s))
        })
        .collect::<Result<_>>()?;

    let index_pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let pairs: Vec<OverlapSummary> = index_pairs
        .par_iter()
        .map(|&(i, j)| {
            let s = overlap::cross_config_overlap(&labels[i], &masks[i], &labels[j], &masks[j])?;
            if s.n_pairs >= 2 {
                s.with_bootstrap(
                    bootstrap_resamples,
                    derive_seed(seed, ((i as u64) << 20) | j as u64),
                )
            } else {
                Ok(s)
            }
        })
        .collect::<Result<_>>()?;

    let mut mean = vec![vec![None; n]; n];
    for (i, b) in baselines.iter().enumerate() {
        mean[i][i] = b.as_ref().map(|s| s.mean);
    }
    for (&(i, j), s) in index_pairs.iter().zip(&pairs) {
        mean[i][j] = Some(s.mean);
        mean[j][i] = Some(s.mean);
    }
    Ok(OverlapMatrix {
        labels,
        mean,
        baselines: baselines.into_iter().flatten().collect(),
        pairs,
    })
}

/// Round every float in a JSON tree to [`REPORT_DIGITS`] significant digits.
pub fn round_json(value: &mut Value) {
    match value {
        Value::Number(num) if num.is_f64() => {
            let x = num.as_f64().expect("f64 number");
            if let Some(n) = serde_json::Number::from_f64(round_sig(x, REPORT_DIGITS)) {
                *num = n;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Serialize with lexicographically sorted keys and 9-significant-digit floats.
pub fn to_stable_json<T: Serialize>(value: &T) -> String {
    let mut tree = serde_json::to_value(value).expect("report serializes");
    round_json(&mut tree);
    let mut text = serde_json::to_string_pretty(&tree).expect("json value serializes");
    text.push('\n');
    text
}

/// Format a float for CSV output.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{}", round_sig(x, REPORT_DIGITS))
    } else {
        String::new()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Comma-separated table with a header row and LF line endings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn scaling_table(bundle: &ReportBundle) -> CsvTable {
    let mut t = CsvTable::new(&[
        "arch", "config", "n_params", "acc_mean", "acc_std", "err_mean", "ece_mean",
    ]);
    for r in &bundle.table {
        t.push(vec![
            r.arch.clone(),
            r.config_id.clone(),
            r.n_params.to_string(),
            fmt_f64(r.acc_mean),
            fmt_opt(r.acc_std),
            fmt_f64(r.err_mean),
            fmt_f64(r.ece_mean),
        ]);
    }
    t
}

pub fn local_exponent_table(rows: &[LocalExponentRow]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "arch",
        "config_lo",
        "config_hi",
        "n_lo",
        "n_hi",
        "alpha_local",
        "label",
    ]);
    for r in rows {
        t.push(vec![
            r.arch.clone(),
            r.config_lo.clone(),
            r.config_hi.clone(),
            r.n_lo.to_string(),
            r.n_hi.to_string(),
            fmt_f64(r.alpha_local),
            r.label.as_str().to_string(),
        ]);
    }
    t
}

pub fn jaccard_matrix_table(m: &OverlapMatrix) -> CsvTable {
    let mut header = vec!["config"];
    header.extend(m.labels.iter().map(String::as_str));
    let mut t = CsvTable::new(&header);
    for (label, row) in m.labels.iter().zip(&m.mean) {
        let mut cells = vec![label.clone()];
        cells.extend(row.iter().map(|v| fmt_opt(*v)));
        t.push(cells);
    }
    t
}

pub fn fairness_table(rows: &[FairnessSummary]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "arch",
        "config",
        "n_params",
        "gini_mean",
        "gini_std",
        "null_gini",
        "bottom_5",
        "bottom_10",
        "bottom_20",
        "top_5",
    ]);
    for r in rows {
        let bottom = |k: usize| fmt_opt(r.k_means.iter().find(|m| m.k == k).map(|m| m.bottom));
        let top5 = fmt_opt(r.k_means.iter().find(|m| m.k == 5).map(|m| m.top));
        t.push(vec![
            r.arch.clone(),
            r.config_id.clone(),
            r.n_params.to_string(),
            fmt_f64(r.gini_mean),
            fmt_opt(r.gini_std),
            fmt_f64(r.null_gini),
            bottom(5),
            bottom(10),
            bottom(20),
            top5,
        ]);
    }
    t
}

pub fn calibration_table(rows: &[CalibrationRow]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "arch",
        "config",
        "n_params",
        "ece_mean",
        "ece_std",
        "global_conf",
        "global_acc",
        "global_gap",
        "mean_conf_correct",
        "mean_conf_incorrect",
    ]);
    for r in rows {
        t.push(vec![
            r.arch.clone(),
            r.config_id.clone(),
            r.n_params.to_string(),
            fmt_f64(r.ece_mean),
            fmt_opt(r.ece_std),
            fmt_f64(r.global_conf),
            fmt_f64(r.global_acc),
            fmt_f64(r.global_gap),
            fmt_opt(r.mean_conf_correct),
            fmt_opt(r.mean_conf_incorrect),
        ]);
    }
    t
}

/// Reliability-diagram rows: one per (config, seed, bin).
pub fn reliability_table(rows: &[CalibrationRow]) -> CsvTable {
    let mut t = CsvTable::new(&[
        "arch", "config", "seed", "bin", "lo", "hi", "count", "conf", "acc",
    ]);
    for r in rows {
        for s in &r.per_seed {
            for (b, bin) in s.summary.bin_stats.iter().enumerate() {
                t.push(vec![
                    r.arch.clone(),
                    r.config_id.clone(),
                    s.seed.to_string(),
                    b.to_string(),
                    fmt_f64(bin.lo),
                    fmt_f64(bin.hi),
                    bin.count.to_string(),
                    fmt_f64(bin.mean_confidence),
                    fmt_f64(bin.accuracy),
                ]);
            }
        }
    }
    t
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Write the five CSV tables and `report.json` into `out_dir`.
pub fn write_report(bundle: &ReportBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let locals: Vec<LocalExponentRow> = bundle
        .scaling
        .iter()
        .flat_map(|s| s.local_exponents.clone())
        .collect();
    Ok(vec![
        write_file(out_dir.join("scaling.csv"), &scaling_table(bundle).render())?,
        write_file(
            out_dir.join("local_exponents.csv"),
            &local_exponent_table(&locals).render(),
        )?,
        write_file(
            out_dir.join("jaccard_matrix.csv"),
            &jaccard_matrix_table(&bundle.overlap).render(),
        )?,
        write_file(
            out_dir.join("fairness.csv"),
            &fairness_table(&bundle.fairness).render(),
        )?,
        write_file(
            out_dir.join("calibration.csv"),
            &calibration_table(&bundle.calibration).render(),
        )?,
        write_file(out_dir.join("report.json"), &to_stable_json(bundle))?,
    ])
}
