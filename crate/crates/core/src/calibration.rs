//! Expected calibration error and confidence diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{DatasetManifest, RunRecord};

/// Recorded in output metadata next to every ECE value.
pub const BIN_RULE: &str =
    "equal-width bins ((b-1)/B, b/B]; the first bin also holds confidence 0, confidence 1 falls in the top bin";

/// Default bin count.
pub const DEFAULT_BINS: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean confidence of the bin's samples; 0 for an empty bin.
    pub mean_confidence: f64,
    /// Accuracy of the bin's samples; 0 for an empty bin.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub ece: f64,
    pub n_bins: usize,
    pub bin_stats: Vec<BinStat>,
    pub mean_conf_correct: Option<f64>,
    pub mean_conf_incorrect: Option<f64>,
    pub global_conf: f64,
    pub global_acc: f64,
    /// `|global_conf − global_acc|`, reported separately from the per-bin ECE.
    pub global_gap: f64,
}

/// Bin index of `conf` under [`BIN_RULE`].
pub fn bin_index(conf: f64, n_bins: usize) -> usize {
    if conf <= 0.0 {
        return 0;
    }
    let edge = |b: usize| b as f64 / n_bins as f64;
    let mut b = ((conf * n_bins as f64).ceil() as usize).clamp(1, n_bins) - 1;
    // Repair rounding in conf·B so the bin respects the float edges b/B.
    while b > 0 && conf <= edge(b) {
        b -= 1;
    }
    while b + 1 < n_bins && conf > edge(b + 1) {
        b += 1;
    }
    b
}

/// ECE and diagnostics from per-sample correctness and confidence.
pub fn ece_from_parts(
    correct: &[bool],
    confidences: &[f64],
    n_bins: usize,
) -> Result<CalibrationSummary> {
    if n_bins == 0 {
        return Err(Error::invalid("ECE needs at least one bin"));
    }
    if correct.len() != confidences.len() {
        return Err(Error::LengthMismatch {
            what: "correctness vs confidences".into(),
            expected: correct.len(),
            found: confidences.len(),
        });
    }
    if correct.is_empty() {
        return Err(Error::invalid("ECE of an empty sample"));
    }
    if let Some(i) = confidences.iter().position(|c| !(0.0..=1.0).contains(c)) {
        return Err(Error::invalid(format!(
            "confidences[{i}] = {} is outside [0, 1]",
            confidences[i]
        )));
    }
    let mut counts = vec![0usize; n_bins];
    let mut conf_sum = vec![0.0f64; n_bins];
    let mut hits = vec![0usize; n_bins];
    for (&ok, &c) in correct.iter().zip(confidences) {
        let b = bin_index(c, n_bins);
        counts[b] += 1;
        conf_sum[b] += c;
        hits[b] += ok as usize;
    }
    let n = correct.len() as f64;
    let mut ece = 0.0;
    let bin_stats: Vec<BinStat> = (0..n_bins)
        .map(|b| {
            let (mean_confidence, accuracy) = if counts[b] > 0 {
                (
                    conf_sum[b] / counts[b] as f64,
                    hits[b] as f64 / counts[b] as f64,
                )
            } else {
                (0.0, 0.0)
            };
            ece += counts[b] as f64 / n * (accuracy - mean_confidence).abs();
            BinStat {
                lo: b as f64 / n_bins as f64,
                hi: (b + 1) as f64 / n_bins as f64,
                count: counts[b],
                mean_confidence,
                accuracy,
            }
        })
        .collect();
    let (mean_conf_correct, mean_conf_incorrect) = split_means(correct, confidences);
    let global_conf = confidences.iter().sum::<f64>() / n;
    let global_acc = correct.iter().filter(|&&c| c).count() as f64 / n;
    Ok(CalibrationSummary {
        ece,
        n_bins,
        bin_stats,
        mean_conf_correct,
        mean_conf_incorrect,
        global_conf,
        global_acc,
        global_gap: (global_conf - global_acc).abs(),
    })
}

fn correctness(record: &RunRecord, manifest: &DatasetManifest) -> Vec<bool> {
    record
        .pred_labels
        .iter()
        .zip(&manifest.true_labels)
        .map(|(p, t)| p == t)
        .collect()
}

/// ECE of one validated record with `n_bins` equal-width bins.
pub fn ece(
    record: &RunRecord,
    manifest: &DatasetManifest,
    n_bins: usize,
) -> Result<CalibrationSummary> {
    ece_from_parts(&correctness(record, manifest), &record.confidences, n_bins)
}

fn split_means(correct: &[bool], confidences: &[f64]) -> (Option<f64>, Option<f64>) {
    let (mut sum_ok, mut n_ok, mut sum_bad, mut n_bad) = (0.0, 0usize, 0.0, 0usize);
    for (&ok, &c) in correct.iter().zip(confidences) {
        if ok {
            sum_ok += c;
            n_ok += 1;
        } else {
            sum_bad += c;
            n_bad += 1;
        }
    }
    (
        (n_ok > 0).then(|| sum_ok / n_ok as f64),
        (n_bad > 0).then(|| sum_bad / n_bad as f64),
    )
}

/// Mean confidence on correct and on incorrect predictions; a side with no
/// samples is `None`.
pub fn confidence_split(
    record: &RunRecord,
    manifest: &DatasetManifest,
) -> (Option<f64>, Option<f64>) {
    split_means(&correctness(record, manifest), &record.confidences)
}
