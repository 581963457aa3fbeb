//! Jaccard overlap between error sets, its two analytic reference values, and
//! percentile-bootstrap intervals.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::ErrorMask;
use crate::stats;

/// Recorded in every summary that carries a bootstrap interval.
pub const BOOTSTRAP_METHOD: &str =
    "percentile bootstrap (type-7 quantiles at 2.5/97.5), pair values resampled i.i.d.; pairs sharing a seed are correlated, so the interval may be optimistic";

/// `|A ∩ B| / |A ∪ B|`, defined as 1 when both masks are empty.
pub fn jaccard(a: &ErrorMask, b: &ErrorMask) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "error masks".into(),
            expected: a.len(),
            found: b.len(),
        });
    }
    let inter = a.bits().intersection_count(b.bits());
    let union = a.bits().union_count(b.bits());
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Expected Jaccard if two models erred independently at rates `e_a`, `e_b`.
pub fn independence_null(e_a: f64, e_b: f64) -> Result<f64> {
    check_rate(e_a)?;
    check_rate(e_b)?;
    if e_a == 0.0 && e_b == 0.0 {
        return Err(Error::invalid(
            "independence null is undefined when both error rates are 0",
        ));
    }
    Ok(e_a * e_b / (e_a + e_b - e_a * e_b))
}

/// Largest Jaccard achievable at error rates `e_a`, `e_b`: the smaller error
/// set nested inside the larger.
pub fn containment_null(e_a: f64, e_b: f64) -> Result<f64> {
    check_rate(e_a)?;
    check_rate(e_b)?;
    if e_a == 0.0 || e_b == 0.0 {
        return Err(Error::invalid(
            "containment null needs both error rates positive",
        ));
    }
    Ok(e_a.min(e_b) / e_a.max(e_b))
}

fn check_rate(e: f64) -> Result<()> {
    if (0.0..=1.0).contains(&e) {
        Ok(())
    } else {
        Err(Error::invalid(format!("error rate {e} is outside [0, 1]")))
    }
}

/// Percentile bootstrap 95% interval for the mean of `values`.
///
/// Values are sorted before resampling, so the interval depends only on the
/// multiset of values and the seed. Resample `i` draws from its own random
/// stream; the result does not depend on the rayon pool size.
pub fn bootstrap_ci(values: &[f64], n_resamples: usize, seed: u64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::invalid("bootstrap needs at least 2 values"));
    }
    if n_resamples < 1000 {
        return Err(Error::invalid("bootstrap needs at least 1000 resamples"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut means: Vec<f64> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stats::stream_rng(seed, i);
            (0..n).map(|_| sorted[rng.random_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    Ok((
        stats::quantile_sorted(&means, 0.025),
        stats::quantile_sorted(&means, 0.975),
    ))
}

/// Error mask of one seed's run.
#[derive(Debug, Clone)]
pub struct SeedMask {
    pub seed: i64,
    pub mask: ErrorMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSummary {
    pub config_a: String,
    pub config_b: String,
    /// One Jaccard value per seed pair, in (seed_a, seed_b) order.
    pub pair_values: Vec<f64>,
    pub mean: f64,
    /// Sample std; absent with a single pair.
    pub std: Option<f64>,
    pub n_pairs: usize,
    /// Seed-mean error rates of the two sides.
    pub error_rate_a: f64,
    pub error_rate_b: f64,
    pub indep_null: Option<f64>,
    pub containment_null: Option<f64>,
    pub bootstrap_ci95: Option<(f64, f64)>,
    /// Whether the bootstrap interval lies entirely off the independence null.
    pub ci_excludes_indep_null: Option<bool>,
}

impl OverlapSummary {
    fn from_pairs(
        config_a: &str,
        config_b: &str,
        pair_values: Vec<f64>,
        e_a: f64,
        e_b: f64,
    ) -> Self {
        OverlapSummary {
            config_a: config_a.to_string(),
            config_b: config_b.to_string(),
            mean: stats::mean(&pair_values),
            std: stats::sample_std(&pair_values),
            n_pairs: pair_values.len(),
            pair_values,
            error_rate_a: e_a,
            error_rate_b: e_b,
            indep_null: independence_null(e_a, e_b).ok(),
            containment_null: containment_null(e_a, e_b).ok(),
            bootstrap_ci95: None,
            ci_excludes_indep_null: None,
        }
    }

    /// Attach a bootstrap interval over the pair values (needs ≥ 2 pairs).
    pub fn with_bootstrap(mut self, n_resamples: usize, seed: u64) -> Result<Self> {
        let ci = bootstrap_ci(&self.pair_values, n_resamples, seed)?;
        self.bootstrap_ci95 = Some(ci);
        self.ci_excludes_indep_null = self.indep_null.map(|null| null < ci.0 || null > ci.1);
        Ok(self)
    }
}

fn mean_error_rate(runs: &[SeedMask]) -> f64 {
    runs.iter().map(|r| r.mask.error_rate()).sum::<f64>() / runs.len() as f64
}

/// Jaccard over the full Cartesian product of seeds of two configurations.
/// Equal seed values on the two sides are still distinct models and are kept.
pub fn cross_config_overlap(
    config_a: &str,
    runs_a: &[SeedMask],
    config_b: &str,
    runs_b: &[SeedMask],
) -> Result<OverlapSummary> {
    if runs_a.is_empty() || runs_b.is_empty() {
        return Err(Error::invalid(
            "cross-config overlap needs at least one run per side",
        ));
    }
    let mut pairs = Vec::with_capacity(runs_a.len() * runs_b.len());
    for a in runs_a {
        for b in runs_b {
            pairs.push(jaccard(&a.mask, &b.mask)?);
        }
    }
    Ok(OverlapSummary::from_pairs(
        config_a,
        config_b,
        pairs,
        mean_error_rate(runs_a),
        mean_error_rate(runs_b),
    ))
}

/// Jaccard over unordered pairs of distinct seeds within one configuration.
pub fn cross_seed_baseline(config: &str, runs: &[SeedMask]) -> Result<OverlapSummary> {
    if runs.len() < 2 {
        return Err(Error::invalid("cross-seed baseline needs at least 2 seeds"));
    }
    let mut pairs = Vec::with_capacity(runs.len() * (runs.len() - 1) / 2);
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            pairs.push(jaccard(&a.mask, &b.mask)?);
        }
    }
    let e = mean_error_rate(runs);
    Ok(OverlapSummary::from_pairs(config, config, pairs, e, e))
}
