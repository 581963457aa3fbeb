//! Planted-parameter recovery grid. Every case goes through records and a
//! manifest, the same path real data takes.

use scalelens::calibration::{self, CalibrationSummary};
use scalelens::overlap::{containment_null, cross_config_overlap, SeedMask};
use scalelens::record::{error_mask, per_class_accuracy, Corpus};
use scalelens::scaling::{corpus_points, fit_power_law, Metric};
use scalelens::spectral::{covariance_spectrum, fit_spectral_decay, SpectrumOptions};
use scalelens::stats::stream_rng;
use scalelens::synth::{self, CalibrationFragment, RunIdentity};

use super::published;

pub struct Outcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn outcome(name: String, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

pub const ALPHAS: [f64; 4] = [0.05, 0.106, 0.156, 0.3];
pub const JACCARDS: [f64; 3] = [0.2, 0.35, 0.42];
pub const BETAS: [f64; 3] = [1.1, 1.45, 2.0];

const NOISE_SIGMA: f64 = 0.01;
const N_SEEDS: usize = 5;

/// Planted error-rate exponent on a published size grid, 5 seeds, log-normal noise.
///
/// Tolerance: 3 analytic standard errors of the seed-mean exponent,
/// `sigma / sqrt(n_seeds * Sxx)` with `Sxx` the spread of ln N.
pub fn scaling_case(alpha: f64, grid: &[(&str, u64, f64)], seed: u64) -> Outcome {
    let sizes: Vec<u64> = grid.iter().map(|r| r.1).collect();
    let ln: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let mean_ln = ln.iter().sum::<f64>() / ln.len() as f64;
    let sxx: f64 = ln.iter().map(|x| (x - mean_ln).powi(2)).sum();
    let se = NOISE_SIGMA / (N_SEEDS as f64 * sxx).sqrt();
    // Smallest model at 60% error.
    let intercept = 0.6f64.ln() + alpha * ln[0];
    let name = format!("alpha = {alpha} on {} sizes", sizes.len());
    let result = (|| -> scalelens::Result<f64> {
        let points =
            synth::gen_power_law_runs(alpha, intercept, NOISE_SIGMA, &sizes, N_SEEDS, seed)?;
        let corpus = synth::points_to_corpus(
            &points,
            "planted",
            synth::balanced_manifest("oracle", 100, 100),
            seed,
        )?;
        let fit = fit_power_law(
            &corpus_points(&corpus, "planted", Metric::ErrorRate),
            Metric::ErrorRate,
        )?;
        Ok(fit.per_seed.expect("aligned seeds").mean)
    })();
    match result {
        Ok(mean) => outcome(
            name,
            (mean - alpha).abs() <= 3.0 * se,
            format!(
                "alpha_mean {mean:.5}, |err| {:.2e} <= 3 SE {:.2e}",
                (mean - alpha).abs(),
                3.0 * se
            ),
        ),
        Err(e) => outcome(name, false, e.to_string()),
    }
}

/// Planted Jaccard between two configurations at the published c=4 / c=64
/// error rates. The construction fixes the set sizes, so the only error is
/// rounding the intersection to an integer.
pub fn overlap_case(target: f64, seed: u64) -> Outcome {
    let (e_a, e_b) = (0.583, 0.247);
    let name = format!("J* = {target} at e = ({e_a}, {e_b})");
    let result = (|| -> scalelens::Result<(f64, f64)> {
        let manifest = synth::balanced_manifest("oracle", 100, 100);
        let (a, b) = synth::gen_overlap_masks(manifest.n_test, e_a, e_b, target, seed)?;
        let mut rng = stream_rng(seed, 9);
        let records = [("a", &a), ("b", &b)]
            .into_iter()
            .map(|(cfg, m)| {
                let correct: Vec<bool> = (0..m.len()).map(|i| !m.is_wrong(i)).collect();
                let id = RunIdentity::new("planted", cfg, if cfg == "a" { 10 } else { 20 }, 0);
                synth::record_from_correctness(
                    &manifest,
                    &id,
                    &correct,
                    vec![0.5; m.len()],
                    &mut rng,
                )
            })
            .collect();
        let corpus = Corpus::new(manifest, records)?;
        let masks: Vec<SeedMask> = corpus
            .records
            .iter()
            .map(|r| SeedMask {
                seed: r.seed,
                mask: error_mask(r, &corpus.manifest),
            })
            .collect();
        let s = cross_config_overlap("a", &masks[..1], "b", &masks[1..])?;
        Ok((s.mean, containment_null(e_a, e_b)?))
    })();
    match result {
        Ok((j, bound)) => outcome(
            name,
            (j - target).abs() <= 1e-3 && j <= bound + 1e-12,
            format!(
                "J {j:.5}, |err| {:.1e} <= 1e-3, containment bound {bound:.4}",
                (j - target).abs()
            ),
        ),
        Err(e) => outcome(name, false, e.to_string()),
    }
}

/// Gaussian rows with covariance diag(k^-beta); 600 features, 50,000 samples,
/// fit over k = 10..=500. Tolerance 0.03, the sampling tolerance the
/// construction is specified with.
pub fn spectral_case(beta: f64, seed: u64) -> Outcome {
    let name = format!("beta = {beta}, 50000 x 600");
    let result = (|| -> scalelens::Result<(f64, f64)> {
        let data = synth::gen_planted_spectrum(beta, 600, 50_000, seed)?;
        let spectrum = covariance_spectrum(&data, SpectrumOptions::default())?;
        let fit = fit_spectral_decay(&spectrum, 10, 500)?;
        Ok((fit.beta, fit.r_squared))
    })();
    match result {
        Ok((b, r2)) => outcome(
            name,
            (b - beta).abs() <= 0.03,
            format!(
                "beta {b:.4}, R^2 {r2:.4}, |err| {:.4} <= 0.03",
                (b - beta).abs()
            ),
        ),
        Err(e) => outcome(name, false, e.to_string()),
    }
}

pub struct Profile {
    pub name: &'static str,
    pub accuracies: &'static [f64],
    pub confidences: &'static [f64],
    pub weights: &'static [f64],
}

pub const PROFILES: [Profile; 4] = [
    Profile {
        name: "perfectly calibrated",
        accuracies: &[0.3, 0.6, 0.9],
        confidences: &[0.3, 0.6, 0.9],
        weights: &[0.2, 0.3, 0.5],
    },
    Profile {
        name: "single bin, acc 0.5 vs conf 0.9",
        accuracies: &[0.5],
        confidences: &[0.9],
        weights: &[1.0],
    },
    // Low accuracy yet nearly calibrated: global confidence and accuracy nearly match.
    Profile {
        name: "small-model like (conf 0.425, acc 0.417)",
        accuracies: &[0.192, 0.392, 0.592, 0.792],
        confidences: &[0.2, 0.4, 0.6, 0.8],
        weights: &[0.35, 0.325, 0.175, 0.15],
    },
    // Global match hides per-bin miscalibration.
    Profile {
        name: "global match, per-bin gap 0.2",
        accuracies: &[0.5, 0.6],
        confidences: &[0.3, 0.8],
        weights: &[0.5, 0.5],
    },
];

/// Tolerance: three binomial standard errors per bin, weighted, plus the
/// rounding of bin sizes to whole samples.
pub fn calibration_case(p: &Profile, seed: u64) -> Outcome {
    const N_PER_CLASS: usize = 200;
    let manifest = synth::balanced_manifest("oracle", 100, N_PER_CLASS);
    let n = manifest.n_test as f64;
    let expected = CalibrationFragment::expected_ece(p.accuracies, p.confidences, p.weights);
    let tol: f64 = p
        .accuracies
        .iter()
        .zip(p.weights)
        .map(|(a, w)| w * 3.0 * (a * (1.0 - a) / (n * w)).sqrt())
        .sum::<f64>()
        + p.accuracies.len() as f64 / n;
    let name = format!("ECE profile: {}", p.name);
    let result = (|| -> scalelens::Result<CalibrationSummary> {
        let frag = synth::gen_calibration_profile(
            manifest.n_test,
            p.accuracies,
            p.confidences,
            p.weights,
            seed,
        )?;
        let id = RunIdentity::new("planted", "profile", 1, 0);
        let record = synth::record_from_correctness(
            &manifest,
            &id,
            &frag.correct,
            frag.confidences,
            &mut stream_rng(seed, 1),
        );
        Corpus::new(manifest.clone(), vec![record.clone()])?;
        calibration::ece(&record, &manifest, calibration::DEFAULT_BINS)
    })();
    match result {
        Ok(s) => outcome(
            name,
            (s.ece - expected).abs() <= tol,
            format!(
                "ece {:.4} vs planted {expected:.4} (tol {tol:.4}); global gap {:.4}",
                s.ece, s.global_gap
            ),
        ),
        Err(e) => outcome(name, false, e.to_string()),
    }
}

/// Binomial per-class correct counts are read back exactly.
pub fn binomial_case(prob: f64, seed: u64) -> Outcome {
    let name = format!("binomial classes p = {prob}");
    let result = (|| -> scalelens::Result<bool> {
        let b = synth::gen_binomial_classes(prob, 100, 100, seed)?;
        let pca = per_class_accuracy(&b.record, &b.manifest)?;
        Ok(pca
            .values
            .iter()
            .zip(&b.correct_counts)
            .all(|(v, &c)| *v == c as f64 / 100.0))
    })();
    match result {
        Ok(ok) => outcome(
            name,
            ok,
            "per-class accuracy equals planted counts / 100".into(),
        ),
        Err(e) => outcome(name, false, e.to_string()),
    }
}

/// Every case of the grid, in a fixed order.
pub fn run_all(seed: u64) -> Vec<Outcome> {
    let mut out = Vec::new();
    for (i, &alpha) in ALPHAS.iter().enumerate() {
        out.push(scaling_case(alpha, &published::SCALECNN, seed + i as u64));
        out.push(scaling_case(
            alpha,
            &published::MOBILENETV2,
            seed + 100 + i as u64,
        ));
    }
    for (i, &j) in JACCARDS.iter().enumerate() {
        out.push(overlap_case(j, seed + 200 + i as u64));
    }
    for (i, &beta) in BETAS.iter().enumerate() {
        out.push(spectral_case(beta, seed + 300 + i as u64));
    }
    for (i, p) in PROFILES.iter().enumerate() {
        out.push(calibration_case(p, seed + 400 + i as u64));
    }
    for (i, &p) in [0.42, 0.75].iter().enumerate() {
        out.push(binomial_case(p, seed + 500 + i as u64));
    }
    out
}
