//! Power-law fits of a metric against parameter count.
//!
//! All fits regress `ln(metric)` on `ln(n_params)` by ordinary least squares
//! and report the negated slope as the exponent, so a metric that shrinks with
//! size has a positive exponent. Intercepts are in natural-log space.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::Corpus;
use crate::stats::{self, linear_fit};

/// One (size, metric) observation from a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n_params: u64,
    pub metric_value: f64,
    pub seed: i64,
    pub config_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ErrorRate,
    TrainLoss,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ErrorRate => "error_rate",
            Metric::TrainLoss => "train_loss",
        }
    }
}

/// Cross-seed statistics of per-seed exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSeedExponents {
    pub seeds: Vec<i64>,
    pub alphas: Vec<f64>,
    pub mean: f64,
    /// Sample std; absent with a single seed.
    pub std: Option<f64>,
    pub ci95: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub metric: Metric,
    /// Exponent of the pooled fit to seed-mean points.
    pub alpha: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Number of seed-mean points in the pooled fit.
    pub n_points: usize,
    pub per_seed: Option<PerSeedExponents>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Seed-mean metric of one configuration.
#[derive(Debug, Clone, PartialEq)]
struct ConfigMean {
    config_id: String,
    n_params: u64,
    mean: f64,
    by_seed: BTreeMap<i64, f64>,
}

fn group_by_config(points: &[ScalingPoint]) -> Result<Vec<ConfigMean>> {
    let mut groups: BTreeMap<&str, (u64, BTreeMap<i64, f64>)> = BTreeMap::new();
    for p in points {
        if !(p.metric_value > 0.0) || !p.metric_value.is_finite() {
            return Err(Error::invalid(format!(
                "metric value {} for config {} seed {} is not positive",
                p.metric_value, p.config_id, p.seed
            )));
        }
        if p.n_params == 0 {
            return Err(Error::invalid(format!(
                "config {} has zero parameters",
                p.config_id
            )));
        }
        let entry = groups
            .entry(&p.config_id)
            .or_insert((p.n_params, BTreeMap::new()));
        if entry.0 != p.n_params {
            return Err(Error::invalid(format!(
                "config {} has inconsistent n_params ({} vs {})",
                p.config_id, entry.0, p.n_params
            )));
        }
        if entry.1.insert(p.seed, p.metric_value).is_some() {
            return Err(Error::invalid(format!(
                "config {} has seed {} twice",
                p.config_id, p.seed
            )));
        }
    }
    let mut out: Vec<ConfigMean> = groups
        .into_iter()
        .map(|(config_id, (n_params, by_seed))| {
            let values: Vec<f64> = by_seed.values().copied().collect();
            ConfigMean {
                config_id: config_id.to_string(),
                n_params,
                mean: stats::mean(&values),
                by_seed,
            }
        })
        .collect();
    out.sort_by(|a, b| (a.n_params, &a.config_id).cmp(&(b.n_params, &b.config_id)));
    Ok(out)
}

fn log_log_fit(sizes: &[u64], values: &[f64]) -> Result<stats::LinearFit> {
    let x: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    linear_fit(&x, &y)
}

/// Fit `metric ~ exp(intercept) * N^-alpha`.
///
/// The pooled exponent, intercept and R² come from one point per
/// configuration (the seed mean). When every seed covers every
/// configuration, each seed is also fit on its own and the spread of those
/// exponents gives the reported uncertainty.
pub fn fit_power_law(points: &[ScalingPoint], metric: Metric) -> Result<ScalingFit> {
    let configs = group_by_config(points)?;
    let distinct: BTreeSet<u64> = configs.iter().map(|c| c.n_params).collect();
    if distinct.len() < 3 {
        return Err(Error::invalid(format!(
            "power-law fit needs at least 3 distinct model sizes, got {}",
            distinct.len()
        )));
    }
    let sizes: Vec<u64> = configs.iter().map(|c| c.n_params).collect();
    let means: Vec<f64> = configs.iter().map(|c| c.mean).collect();
    let pooled = log_log_fit(&sizes, &means)?;

    let mut warnings = Vec::new();
    let seeds: BTreeSet<i64> = configs
        .iter()
        .flat_map(|c| c.by_seed.keys().copied())
        .collect();
    let aligned = configs.iter().all(|c| c.by_seed.len() == seeds.len());
    let per_seed = if aligned {
        let mut alphas = Vec::with_capacity(seeds.len());
        for seed in &seeds {
            let values: Vec<f64> = configs.iter().map(|c| c.by_seed[seed]).collect();
            alphas.push(-log_log_fit(&sizes, &values)?.slope);
        }
        let mean = stats::mean(&alphas);
        let std = stats::sample_std(&alphas);
        let ci95 = std.map(|s| {
            let n = alphas.len() as f64;
            let half = stats::t_critical(0.95, n - 1.0) * s / n.sqrt();
            (mean - half, mean + half)
        });
        Some(PerSeedExponents {
            seeds: seeds.into_iter().collect(),
            alphas,
            mean,
            std,
            ci95,
        })
    } else {
        warnings
            .push("seeds do not cover every configuration; per-seed exponents omitted".to_string());
        None
    };

    Ok(ScalingFit {
        metric,
        alpha: -pooled.slope,
        intercept: pooled.intercept,
        r_squared: pooled.r_squared,
        n_points: configs.len(),
        per_seed,
        warnings,
    })
}

/// Result of a two-sample t-test on per-seed exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentComparison {
    pub t_statistic: f64,
    pub p_value: f64,
    pub dof: usize,
}

/// Pooled-variance (Student) two-sample t-test, two-sided.
pub fn compare_exponents(fit_a: &ScalingFit, fit_b: &ScalingFit) -> Result<ExponentComparison> {
    let missing = || Error::invalid("both fits need per-seed exponents from at least 2 seeds");
    let a = &fit_a.per_seed.as_ref().ok_or_else(missing)?.alphas;
    let b = &fit_b.per_seed.as_ref().ok_or_else(missing)?.alphas;
    two_sample_t(a, b)
}

pub fn two_sample_t(a: &[f64], b: &[f64]) -> Result<ExponentComparison> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("t-test needs at least 2 values per group"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let dof = a.len() + b.len() - 2;
    let va = stats::sample_std(a).unwrap().powi(2);
    let vb = stats::sample_std(b).unwrap().powi(2);
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / dof as f64;
    let diff = stats::mean(a) - stats::mean(b);
    let se = (pooled * (1.0 / na + 1.0 / nb)).sqrt();
    let t_statistic = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    Ok(ExponentComparison {
        t_statistic,
        p_value: stats::t_two_sided_p(t_statistic, dof as f64),
        dof,
    })
}

/// Finite-difference exponent between two adjacent model sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExponent {
    pub config_lo: String,
    pub config_hi: String,
    pub n_lo: u64,
    pub n_hi: u64,
    /// Computed from seed-mean metrics.
    pub alpha_local: f64,
    /// One value per shared seed; empty unless both configs have the same seeds.
    pub per_seed_values: Vec<f64>,
}

fn slope_between(n_lo: u64, n_hi: u64, m_lo: f64, m_hi: f64) -> f64 {
    -(m_hi.ln() - m_lo.ln()) / ((n_hi as f64).ln() - (n_lo as f64).ln())
}

/// One [`LocalExponent`] per adjacent pair of configurations, in size order.
pub fn local_exponents(points: &[ScalingPoint]) -> Result<Vec<LocalExponent>> {
    let configs = group_by_config(points)?;
    if configs.len() < 2 {
        return Err(Error::invalid(
            "local exponents need at least 2 configurations",
        ));
    }
    if let Some(w) = configs.windows(2).find(|w| w[0].n_params == w[1].n_params) {
        return Err(Error::invalid(format!(
            "configs {} and {} have the same parameter count {}",
            w[0].config_id, w[1].config_id, w[0].n_params
        )));
    }
    Ok(configs
        .windows(2)
        .map(|w| {
            let (lo, hi) = (&w[0], &w[1]);
            let per_seed_values = if lo.by_seed.keys().eq(hi.by_seed.keys()) {
                lo.by_seed
                    .iter()
                    .map(|(seed, &m_lo)| {
                        slope_between(lo.n_params, hi.n_params, m_lo, hi.by_seed[seed])
                    })
                    .collect()
            } else {
                Vec::new()
            };
            LocalExponent {
                config_lo: lo.config_id.clone(),
                config_hi: hi.config_id.clone(),
                n_lo: lo.n_params,
                n_hi: hi.n_params,
                alpha_local: slope_between(lo.n_params, hi.n_params, lo.mean, hi.mean),
                per_seed_values,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaturationLabel {
    Scaling,
    Diminishing,
    Saturated,
}

impl SaturationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SaturationLabel::Scaling => "scaling",
            SaturationLabel::Diminishing => "diminishing",
            SaturationLabel::Saturated => "saturated",
        }
    }
}

/// Upper bounds (inclusive) on `alpha_local` for the two pessimistic labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationThresholds {
    pub saturated: f64,
    pub diminishing: f64,
}

impl Default for SaturationThresholds {
    fn default() -> Self {
        SaturationThresholds {
            saturated: 0.01,
            diminishing: 0.05,
        }
    }
}

impl SaturationThresholds {
    /// A value exactly on a threshold takes the lower label.
    pub fn label(&self, alpha_local: f64) -> SaturationLabel {
        if alpha_local <= self.saturated {
            SaturationLabel::Saturated
        } else if alpha_local <= self.diminishing {
            SaturationLabel::Diminishing
        } else {
            SaturationLabel::Scaling
        }
    }
}

pub fn classify_saturation(
    locals: &[LocalExponent],
    thresholds: SaturationThresholds,
) -> Vec<SaturationLabel> {
    locals
        .iter()
        .map(|l| thresholds.label(l.alpha_local))
        .collect()
}

/// Scaling points of one architecture, either error rate or final training loss.
///
/// Runs without a training loss are skipped for [`Metric::TrainLoss`].
pub fn corpus_points(corpus: &Corpus, arch: &str, metric: Metric) -> Vec<ScalingPoint> {
    let mut points = Vec::new();
    for group in corpus.configs().iter().filter(|g| g.arch == arch) {
        for run in corpus.runs(group) {
            let value = match metric {
                Metric::ErrorRate => Some(1.0 - run.accuracy(&corpus.manifest)),
                Metric::TrainLoss => run.final_train_loss,
            };
            if let Some(metric_value) = value {
                points.push(ScalingPoint {
                    n_params: run.n_params,
                    metric_value,
                    seed: run.seed,
                    config_id: run.config_id.clone(),
                });
            }
        }
    }
    points
}
