//! Inequality of per-class accuracy: Gini coefficient, its binomial sampling
//! floor, and hardest/easiest-class means.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::PerClassAccuracy;
use crate::stats;

/// Gini coefficient in mean-absolute-difference form,
/// `G = Σ_i Σ_j |x_i − x_j| / (2 n² x̄)`.
///
/// Evaluated in O(n log n) through the sorted-rank identity
/// `Σ_i Σ_j |x_i − x_j| = 2 Σ_k (2k − n − 1) x_(k)` (1-based ranks).
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("gini of an empty sequence"));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!(
            "gini needs finite nonnegative values, got {v}"
        )));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::invalid("gini is undefined when every value is 0"));
    }
    // Normalizing by the maximum makes the result exactly scale free for the
    // common cases (equal values, two-level populations).
    let mut sorted: Vec<f64> = values.iter().map(|v| v / max).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let total: f64 = sorted.iter().sum();
    // Sorted-rank identity: sum_ij |x_i - x_j| = 2 sum_k (2k - n - 1) x_(k).
    // Ranks k = i+1..=j of one run of equal values carry total weight
    // c (i + j - n), c = j - i; the weights sum to zero overall, so values
    // are taken relative to the minimum.
    let min = sorted[0];
    let mut weighted = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let w = (j - i) as f64 * (i as f64 + j as f64 - n as f64);
        weighted += w * (sorted[i] - min);
        i = j;
    }
    Ok((weighted / (n as f64 * total)).max(0.0))
}

/// Monte-Carlo Gini under the hypothesis that every class has the same true
/// accuracy `p`: mean and sample std over `n_trials` trials.
pub fn binomial_null_gini(
    p: f64,
    n_classes: usize,
    n_per_class: u64,
    n_trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "binomial null needs p in (0, 1), got {p}"
        )));
    }
    if n_classes == 0 || n_per_class == 0 {
        return Err(Error::invalid(
            "binomial null needs positive class and sample counts",
        ));
    }
    if n_trials < 1000 {
        return Err(Error::invalid("binomial null needs at least 1000 trials"));
    }
    let dist = Binomial::new(n_per_class, p).map_err(|e| Error::invalid(e.to_string()))?;
    let ginis: Vec<f64> = (0..n_trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stats::stream_rng(seed, trial);
            let accs: Vec<f64> = (0..n_classes)
                .map(|_| dist.sample(&mut rng) as f64 / n_per_class as f64)
                .collect();
            // An all-zero draw (only plausible for tiny p·n) has no defined Gini; count it as 0.
            gini(&accs).unwrap_or(0.0)
        })
        .collect();
    Ok((
        stats::mean(&ginis),
        stats::sample_std(&ginis).unwrap_or(0.0),
    ))
}

/// Class indices from hardest to easiest. Ties break by class index ascending.
pub fn difficulty_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Mean accuracy of the `k` hardest and the `k` easiest classes.
pub fn bottom_top_k(pca: &PerClassAccuracy, k: usize) -> Result<(f64, f64)> {
    let order = difficulty_order(&pca.values);
    bottom_top_k_with_order(&pca.values, &order, k)
}

/// As [`bottom_top_k`] but with a caller-supplied class ranking.
pub fn bottom_top_k_with_order(values: &[f64], order: &[usize], k: usize) -> Result<(f64, f64)> {
    if k == 0 || k > values.len() {
        return Err(Error::invalid(format!(
            "k = {k} is outside [1, {}]",
            values.len()
        )));
    }
    let bottom = order[..k].iter().map(|&c| values[c]).sum::<f64>() / k as f64;
    let top = order[order.len() - k..]
        .iter()
        .map(|&c| values[c])
        .sum::<f64>()
        / k as f64;
    Ok((bottom, top))
}

/// Percentile bootstrap 95% interval of `mean(a) − mean(b)`, each side
/// resampled independently.
pub fn gini_difference_ci(
    ginis_a: &[f64],
    ginis_b: &[f64],
    n_resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if ginis_a.len() < 2 || ginis_b.len() < 2 {
        return Err(Error::invalid(
            "gini difference CI needs at least 2 seeds per side",
        ));
    }
    if n_resamples < 1000 {
        return Err(Error::invalid("bootstrap needs at least 1000 resamples"));
    }
    let mut a = ginis_a.to_vec();
    let mut b = ginis_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let resample_mean = |rng: &mut rand_chacha::ChaCha8Rng, xs: &[f64]| {
        (0..xs.len())
            .map(|_| xs[rng.random_range(0..xs.len())])
            .sum::<f64>()
            / xs.len() as f64
    };
    let mut diffs: Vec<f64> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stats::stream_rng(seed, i);
            resample_mean(&mut rng, &a) - resample_mean(&mut rng, &b)
        })
        .collect();
    diffs.sort_by(f64::total_cmp);
    Ok((
        stats::quantile_sorted(&diffs, 0.025),
        stats::quantile_sorted(&diffs, 0.975),
    ))
}

/// How hardest/easiest classes are chosen when summarizing a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Ranking {
    /// Each run ranks its own classes; bottom/top means are averaged over runs.
    PerSeed,
    /// One ranking per configuration from its seed-mean per-class accuracy.
    Pooled,
    /// One fixed ranking taken from the seed-mean accuracy of a reference configuration.
    Reference { arch: String, config_id: String },
}

/// The k values reported in fairness summaries.
pub const REPORTED_K: [usize; 3] = [5, 10, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    pub k: usize,
    pub bottom: f64,
    pub top: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessSummary {
    pub arch: String,
    pub config_id: String,
    pub n_params: u64,
    pub per_seed_ginis: Vec<f64>,
    pub gini_mean: f64,
    pub gini_std: Option<f64>,
    /// Accuracy the binomial null was evaluated at (seed-mean overall accuracy).
    pub null_p: f64,
    pub null_gini: f64,
    pub null_gini_std: f64,
    pub k_means: Vec<KMeans>,
}

/// Summarize the per-class accuracy vectors of one configuration's runs.
///
/// `reference_order` is required for [`Ranking::Reference`] and ignored otherwise.
#[allow(clippy::too_many_arguments)]
pub fn summarize_config(
    arch: &str,
    config_id: &str,
    n_params: u64,
    runs: &[PerClassAccuracy],
    ranking: &Ranking,
    reference_order: Option<&[usize]>,
    n_per_class: u64,
    null_trials: usize,
    seed: u64,
) -> Result<FairnessSummary> {
    if runs.is_empty() {
        return Err(Error::invalid(format!(
            "config {arch}:{config_id} has no runs"
        )));
    }
    let per_seed_ginis = runs
        .iter()
        .map(|r| gini(&r.values))
        .collect::<Result<Vec<_>>>()?;
    let n_classes = runs[0].values.len();
    let null_p = stats::mean(&runs.iter().map(|r| r.overall()).collect::<Vec<_>>());
    let (null_gini, null_gini_std) = if null_p > 0.0 && null_p < 1.0 {
        binomial_null_gini(null_p, n_classes, n_per_class, null_trials, seed)?
    } else {
        // Every class at 0 or at 1: no sampling spread at all.
        (0.0, 0.0)
    };
    let mean_values: Vec<f64> = (0..n_classes)
        .map(|c| runs.iter().map(|r| r.values[c]).sum::<f64>() / runs.len() as f64)
        .collect();

    let mut k_means = Vec::new();
    for k in REPORTED_K.into_iter().filter(|&k| k <= n_classes) {
        let (bottom, top) = match ranking {
            Ranking::PerSeed => {
                let pairs = runs
                    .iter()
                    .map(|r| bottom_top_k(r, k))
                    .collect::<Result<Vec<_>>>()?;
                let n = pairs.len() as f64;
                (
                    pairs.iter().map(|p| p.0).sum::<f64>() / n,
                    pairs.iter().map(|p| p.1).sum::<f64>() / n,
                )
            }
            Ranking::Pooled => {
                bottom_top_k_with_order(&mean_values, &difficulty_order(&mean_values), k)?
            }
            Ranking::Reference { .. } => {
                let order = reference_order.ok_or_else(|| {
                    Error::invalid("reference ranking requested without a reference order")
                })?;
                bottom_top_k_with_order(&mean_values, order, k)?
            }
        };
        k_means.push(KMeans { k, bottom, top });
    }

    Ok(FairnessSummary {
        arch: arch.to_string(),
        config_id: config_id.to_string(),
        n_params,
        gini_mean: stats::mean(&per_seed_ginis),
        gini_std: stats::sample_std(&per_seed_ginis),
        per_seed_ginis,
        null_p,
        null_gini,
        null_gini_std,
        k_means,
    })
}
