//! Data covariance eigenspectra and the spectral capacity relations.
//!
//! If covariance eigenvalues decay as `λ_k ~ k^-β` and a model of `N`
//! parameters captures the top `K(N) ~ N^γ` modes, the loss left in the tail,
//! `Σ_{k>K} λ_k ≈ K^(1-β) / (β-1)`, falls as `N^-α` with `α = γ(β − 1)`.
//! This module measures `β` from data and converts between `α`, `β`, `γ`.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self_adjoint_evd, self_adjoint_evd_scratch, ComputeEigenvectors};
use faer::linalg::matmul::matmul;
use faer::linalg::svd::{svd, svd_scratch, ComputeSvdVectors};
use faer::{Accum, Mat, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::linear_fit;

/// Rank efficiency from width counting: `N ∝ m²` and `K ∝ m` give `K ∝ N^0.5`.
pub const NAIVE_GAMMA: f64 = 0.5;

/// Default eigenvalue fit range (1-based, inclusive): skip the dominant modes.
pub const DEFAULT_K_MIN: usize = 10;
pub const DEFAULT_K_MAX: usize = 500;

/// Above this many features the spectrum is computed from singular values of
/// the centered data instead of an explicit covariance matrix.
pub const DEFAULT_DIRECT_MAX_FEATURES: usize = 4096;

/// Dense row-major sample matrix (one row per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DataMatrix {
    pub fn from_row_major(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::LengthMismatch {
                what: format!("{n_rows}x{n_cols} data matrix"),
                expected: n_rows * n_cols,
                found: data.len(),
            });
        }
        Ok(DataMatrix {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Streaming sample covariance.
///
/// Rows are accumulated relative to the first row seen, which keeps the
/// one-pass Gram update free of the cancellation a raw `XᵀX − n μμᵀ` would
/// suffer on uncentered data.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    n_features: usize,
    shift: Option<Vec<f64>>,
    n: usize,
    sum: Vec<f64>,
    gram: Mat<f64>,
    scratch: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(n_features: usize) -> Self {
        CovarianceAccumulator {
            n_features,
            shift: None,
            n: 0,
            sum: vec![0.0; n_features],
            gram: Mat::zeros(n_features, n_features),
            scratch: Vec::new(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    /// Add a block of rows given in row-major order.
    pub fn push_rows(&mut self, rows: &[f64]) -> Result<()> {
        let p = self.n_features;
        if p == 0 || rows.len() % p != 0 {
            return Err(Error::invalid(format!(
                "row block of {} values is not a multiple of {p} features",
                rows.len()
            )));
        }
        if let Some(i) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at row {}, column {}",
                self.n + i / p,
                i % p
            )));
        }
        let n_new = rows.len() / p;
        if n_new == 0 {
            return Ok(());
        }
        let shift = self.shift.get_or_insert_with(|| rows[..p].to_vec());
        self.scratch.clear();
        self.scratch
            .extend(rows.iter().enumerate().map(|(i, v)| v - shift[i % p]));
        for row in self.scratch.chunks_exact(p) {
            for (s, v) in self.sum.iter_mut().zip(row) {
                *s += v;
            }
        }
        let block = MatRef::from_row_major_slice(&self.scratch, n_new, p);
        matmul(
            self.gram.as_mut(),
            Accum::Add,
            block.transpose(),
            block,
            1.0,
            Par::Seq,
        );
        self.n += n_new;
        Ok(())
    }

    /// Sample covariance with divisor `n − 1`.
    pub fn covariance(&self) -> Result<Mat<f64>> {
        if self.n < 2 {
            return Err(Error::invalid("covariance needs at least 2 samples"));
        }
        let n = self.n as f64;
        let p = self.n_features;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        Ok(Mat::from_fn(p, p, |i, j| {
            // Only the lower triangle of the Gram update is symmetric-exact; mirror it.
            let (a, b) = if i >= j { (i, j) } else { (j, i) };
            (self.gram[(a, b)] - n * mean[a] * mean[b]) / (n - 1.0)
        }))
    }

    pub fn into_spectrum(self) -> Result<EigenSpectrum> {
        let cov = self.covariance()?;
        spectrum_from_covariance(cov.as_ref(), self.n)
    }
}

/// Eigenvalues of a sample covariance, in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    pub eigenvalues: Vec<f64>,
    pub n_samples: usize,
    pub n_features: usize,
    pub centering: bool,
}

impl EigenSpectrum {
    /// An analytic spectrum `λ_k = scale · k^-β`, `k = 1..=len`.
    pub fn power_law(beta: f64, scale: f64, len: usize) -> Self {
        EigenSpectrum {
            eigenvalues: (1..=len).map(|k| scale * (k as f64).powf(-beta)).collect(),
            n_samples: 0,
            n_features: len,
            centering: false,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

fn finalize_eigenvalues(
    mut values: Vec<f64>,
    n_samples: usize,
    n_features: usize,
) -> Result<EigenSpectrum> {
    values.sort_by(|a, b| b.total_cmp(a));
    let max = values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = -1e-10 * max;
    if let Some(v) = values.iter().find(|&&v| v < floor && v < -1e-300) {
        return Err(Error::Numerical(format!(
            "covariance eigenvalue {v:e} is negative beyond round-off (max {max:e})"
        )));
    }
    for v in &mut values {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    values.truncate(n_samples.min(n_features));
    Ok(EigenSpectrum {
        eigenvalues: values,
        n_samples,
        n_features,
        centering: true,
    })
}

/// Symmetric eigendecomposition of an explicit covariance matrix.
pub fn spectrum_from_covariance(cov: MatRef<'_, f64>, n_samples: usize) -> Result<EigenSpectrum> {
    let p = cov.nrows();
    if cov.ncols() != p {
        return Err(Error::invalid("covariance matrix must be square"));
    }
    let mut s = Diag::<f64>::zeros(p);
    let par = Par::Seq;
    let mut mem = MemBuffer::new(self_adjoint_evd_scratch::<f64>(
        p,
        ComputeEigenvectors::No,
        par,
        Default::default(),
    ));
    self_adjoint_evd(
        cov,
        s.as_mut(),
        None,
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let values: Vec<f64> = s.column_vector().iter().copied().collect();
    finalize_eigenvalues(values, n_samples, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpectrumOptions {
    /// Largest feature count for which the explicit covariance route is used.
    pub direct_max_features: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            direct_max_features: DEFAULT_DIRECT_MAX_FEATURES,
        }
    }
}

/// Eigenvalues of the column-centered sample covariance (divisor `n − 1`).
pub fn covariance_spectrum(data: &DataMatrix, opts: SpectrumOptions) -> Result<EigenSpectrum> {
    if data.n_rows < 2 {
        return Err(Error::invalid(
            "covariance spectrum needs at least 2 samples",
        ));
    }
    if data.n_cols <= opts.direct_max_features {
        let mut acc = CovarianceAccumulator::new(data.n_cols);
        acc.push_rows(&data.data)?;
        return acc.into_spectrum();
    }
    if let Some(i) = data.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite entry at row {}, column {}",
            i / data.n_cols,
            i % data.n_cols
        )));
    }
    let (n, p) = (data.n_rows, data.n_cols);
    let mut mean = vec![0.0; p];
    for row in data.data.chunks_exact(p) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = Mat::from_fn(n, p, |i, j| data.data[i * p + j] - mean[j]);
    let k = n.min(p);
    let mut s = Diag::<f64>::zeros(k);
    let par = Par::Seq;
    let mut mem = MemBuffer::new(svd_scratch::<f64>(
        n,
        p,
        ComputeSvdVectors::No,
        ComputeSvdVectors::No,
        par,
        Default::default(),
    ));
    svd(
        centered.as_ref(),
        s.as_mut(),
        None,
        None,
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|e| Error::Numerical(format!("singular value decomposition failed: {e:?}")))?;
    let values = s
        .column_vector()
        .iter()
        .map(|sv| sv * sv / (n as f64 - 1.0))
        .collect();
    finalize_eigenvalues(values, n, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFit {
    pub beta: f64,
    /// OLS standard error of the log-log slope.
    pub beta_std: f64,
    pub r_squared: f64,
    /// log-space intercept of `ln λ_k = intercept − β ln k`.
    pub intercept: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub n_points: usize,
}

/// Fit `λ_k ~ k^-β` over the 1-based inclusive index range `[k_min, k_max]`.
pub fn fit_spectral_decay(
    spectrum: &EigenSpectrum,
    k_min: usize,
    k_max: usize,
) -> Result<SpectralFit> {
    if k_min < 1 || k_max <= k_min {
        return Err(Error::invalid(format!(
            "invalid fit range [{k_min}, {k_max}]"
        )));
    }
    if k_max > spectrum.len() {
        return Err(Error::invalid(format!(
            "k_max = {k_max} exceeds the spectrum length {}",
            spectrum.len()
        )));
    }
    let n_points = k_max - k_min + 1;
    if n_points < 3 {
        return Err(Error::invalid("spectral fit needs at least 3 eigenvalues"));
    }
    let values = &spectrum.eigenvalues[k_min - 1..k_max];
    if let Some(i) = values.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::invalid(format!(
            "eigenvalue k = {} is zero; cannot take its logarithm",
            k_min + i
        )));
    }
    let x: Vec<f64> = (k_min..=k_max).map(|k| (k as f64).ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(SpectralFit {
        beta: -fit.slope,
        beta_std: fit.slope_std_err.unwrap_or(0.0),
        r_squared: fit.r_squared,
        intercept: fit.intercept,
        k_min,
        k_max,
        n_points,
    })
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 1.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "beta = {beta} must exceed 1: the residual tail integral of k^-beta diverges otherwise"
        )))
    }
}

/// Scaling exponent implied by spectral decay `beta` and rank efficiency `gamma`.
pub fn predict_alpha(beta: f64, gamma: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid(format!("gamma = {gamma} is outside (0, 1)")));
    }
    Ok(gamma * (beta - 1.0))
}

/// Rank efficiency that reproduces a measured exponent at spectral decay `beta`.
pub fn implied_gamma(alpha_measured: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(alpha_measured > 0.0) {
        return Err(Error::invalid(format!(
            "alpha = {alpha_measured} must be positive"
        )));
    }
    Ok(alpha_measured / (beta - 1.0))
}

/// Architecture-side parameters of the capacity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityModel {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_param: Option<f64>,
}

impl CapacityModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid(format!("gamma = {gamma} is outside (0, 1)")));
        }
        Ok(CapacityModel {
            gamma,
            depth: None,
            resolution: None,
            width_param: None,
        })
    }

    /// `K(N) = N^γ`.
    pub fn effective_rank(&self, n_params: f64) -> f64 {
        n_params.powf(self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualForm {
    /// `K^(1−β) / (β − 1)`, the integral approximation.
    Analytic,
    /// `Σ_{k>K} λ_k` over a measured spectrum.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualLoss {
    pub form: ResidualForm,
    pub capacity: f64,
    pub value: f64,
}

pub fn residual_loss_analytic(beta: f64, capacity: f64) -> Result<ResidualLoss> {
    check_beta(beta)?;
    if !(capacity >= 1.0) {
        return Err(Error::invalid(format!(
            "capacity K = {capacity} must be at least 1"
        )));
    }
    Ok(ResidualLoss {
        form: ResidualForm::Analytic,
        capacity,
        value: capacity.powf(1.0 - beta) / (beta - 1.0),
    })
}

/// Tail sum of eigenvalues with index `k > K` (1-based); `K` is floored.
pub fn residual_loss_empirical(spectrum: &EigenSpectrum, capacity: f64) -> Result<ResidualLoss> {
    if !(capacity >= 1.0) {
        return Err(Error::invalid(format!(
            "capacity K = {capacity} must be at least 1"
        )));
    }
    let k = capacity.floor() as usize;
    if k > spectrum.len() {
        return Err(Error::invalid(format!(
            "capacity K = {k} exceeds the spectrum length {}",
            spectrum.len()
        )));
    }
    Ok(ResidualLoss {
        form: ResidualForm::Empirical,
        capacity,
        value: spectrum.eigenvalues[k..].iter().sum(),
    })
}
