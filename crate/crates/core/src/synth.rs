//! Seeded generators with planted parameters.
//!
//! Each generator plants a known quantity (an exponent, an overlap, a
//! calibration profile, a spectral decay, a per-class accuracy) so the
//! matching analysis can be checked against it. Generators that produce
//! predictions emit ordinary manifests and run records, so checks go through
//! the same ingestion path as real data.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{Corpus, DatasetManifest, ErrorMask, RunRecord, SCHEMA_VERSION};
use crate::scaling::ScalingPoint;
use crate::spectral::DataMatrix;
use crate::stats::stream_rng;

/// Balanced manifest: sample `i` has label `i mod n_classes`.
pub fn balanced_manifest(
    dataset_id: &str,
    n_classes: usize,
    n_per_class: usize,
) -> DatasetManifest {
    let labels = (0..n_classes * n_per_class)
        .map(|i| (i % n_classes) as u32)
        .collect();
    DatasetManifest::new(dataset_id, n_classes, labels)
}

/// A wrong label for `truth`, uniform over the other classes.
fn wrong_label(rng: &mut ChaCha8Rng, truth: u32, n_classes: usize) -> u32 {
    let shift = rng.random_range(1..n_classes as u32);
    (truth + shift) % n_classes as u32
}

/// Identity fields of a generated record.
#[derive(Debug, Clone, PartialEq)]
pub struct RunIdentity {
    pub arch: String,
    pub config_id: String,
    pub width_param: f64,
    pub n_params: u64,
    pub seed: i64,
}

impl RunIdentity {
    pub fn new(arch: &str, config_id: &str, n_params: u64, seed: i64) -> Self {
        RunIdentity {
            arch: arch.to_string(),
            config_id: config_id.to_string(),
            width_param: 1.0,
            n_params,
            seed,
        }
    }
}

/// Build a record whose predictions are right exactly where `correct` says.
pub fn record_from_correctness(
    manifest: &DatasetManifest,
    id: &RunIdentity,
    correct: &[bool],
    confidences: Vec<f64>,
    rng: &mut ChaCha8Rng,
) -> RunRecord {
    let pred_labels = manifest
        .true_labels
        .iter()
        .zip(correct)
        .map(|(&t, &ok)| {
            if ok {
                t
            } else {
                wrong_label(rng, t, manifest.n_classes)
            }
        })
        .collect();
    RunRecord {
        schema_version: SCHEMA_VERSION.to_string(),
        dataset_id: manifest.dataset_id.clone(),
        arch: id.arch.clone(),
        config_id: id.config_id.clone(),
        width_param: id.width_param,
        n_params: id.n_params,
        macs: None,
        seed: id.seed,
        pred_labels,
        confidences,
        final_train_loss: None,
        top5_pred_labels: None,
    }
}

/// `metric = exp(intercept) · N^-alpha · exp(ε)`, `ε ~ Normal(0, noise_sigma²)`,
/// for every size and seed `0..n_seeds`.
pub fn gen_power_law_runs(
    alpha: f64,
    intercept: f64,
    noise_sigma: f64,
    sizes: &[u64],
    n_seeds: usize,
    seed: u64,
) -> Result<Vec<ScalingPoint>> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("planted alpha must be positive"));
    }
    if sizes.contains(&0) {
        return Err(Error::invalid("model sizes must be positive"));
    }
    let mut distinct = sizes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != sizes.len() {
        return Err(Error::invalid("model sizes must be distinct"));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = stream_rng(seed, 0);
    let mut points = Vec::with_capacity(sizes.len() * n_seeds);
    for &n in sizes {
        for s in 0..n_seeds {
            let eps: f64 = noise.sample(&mut rng);
            points.push(ScalingPoint {
                n_params: n,
                metric_value: (intercept - alpha * (n as f64).ln() + eps).exp(),
                seed: s as i64,
                config_id: format!("n{n}"),
            });
        }
    }
    Ok(points)
}

/// Turn error-rate points into a corpus: each point becomes one record with
/// `round(metric · n_test)` errors at random positions.
pub fn points_to_corpus(
    points: &[ScalingPoint],
    arch: &str,
    manifest: DatasetManifest,
    seed: u64,
) -> Result<Corpus> {
    let n = manifest.n_test;
    let mut rng = stream_rng(seed, 1);
    let mut records = Vec::with_capacity(points.len());
    for p in points {
        if p.metric_value > 1.0 {
            return Err(Error::invalid(format!(
                "error rate {} exceeds 1",
                p.metric_value
            )));
        }
        let n_wrong = (p.metric_value * n as f64).round() as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut correct = vec![true; n];
        for &i in &idx[..n_wrong] {
            correct[i] = false;
        }
        let id = RunIdentity::new(arch, &p.config_id, p.n_params, p.seed);
        let conf = correct.iter().map(|&c| if c { 0.8 } else { 0.3 }).collect();
        records.push(record_from_correctness(
            &manifest, &id, &correct, conf, &mut rng,
        ));
    }
    Corpus::new(manifest, records)
}

/// Set sizes realized by [`gen_overlap_masks`]:
/// `|A| = round(e_a n)`, `|B| = round(e_b n)`, `|A∩B| = round(J (|A|+|B|) / (1+J))`.
pub fn planted_overlap_sizes(
    n_test: usize,
    e_a: f64,
    e_b: f64,
    target_jaccard: f64,
) -> (usize, usize, usize) {
    let a = (e_a * n_test as f64).round() as usize;
    let b = (e_b * n_test as f64).round() as usize;
    let inter = (target_jaccard * (a + b) as f64 / (1.0 + target_jaccard)).round() as usize;
    (a, b, inter)
}

/// Two masks with planted error rates and Jaccard overlap, members placed at random.
pub fn gen_overlap_masks(
    n_test: usize,
    e_a: f64,
    e_b: f64,
    target_jaccard: f64,
    seed: u64,
) -> Result<(ErrorMask, ErrorMask)> {
    for (name, v) in [
        ("e_a", e_a),
        ("e_b", e_b),
        ("target_jaccard", target_jaccard),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} = {v} is outside [0, 1]")));
        }
    }
    let (a, b, inter) = planted_overlap_sizes(n_test, e_a, e_b, target_jaccard);
    if inter > a.min(b) || a + b - inter > n_test {
        return Err(Error::invalid(format!(
            "target Jaccard {target_jaccard} is infeasible for |A| = {a}, |B| = {b}, n = {n_test}"
        )));
    }
    let mut idx: Vec<usize> = (0..n_test).collect();
    idx.shuffle(&mut stream_rng(seed, 0));
    // idx[..a] is A; B takes the first `inter` members of A and the next b - inter outsiders.
    let mask_a = ErrorMask::from_indices(n_test, idx[..a].iter().copied());
    let mask_b = ErrorMask::from_indices(
        n_test,
        idx[..inter].iter().chain(&idx[a..a + b - inter]).copied(),
    );
    Ok((mask_a, mask_b))
}

/// Per-sample correctness and confidence with a planted reliability profile.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFragment {
    pub correct: Vec<bool>,
    pub confidences: Vec<f64>,
}

impl CalibrationFragment {
    /// Expected ECE of the profile: `Σ_b w_b |acc_b − conf_b|`.
    pub fn expected_ece(
        bin_accuracies: &[f64],
        bin_confidences: &[f64],
        bin_weights: &[f64],
    ) -> f64 {
        bin_accuracies
            .iter()
            .zip(bin_confidences)
            .zip(bin_weights)
            .map(|((a, c), w)| w * (a - c).abs())
            .sum()
    }
}

/// Split `n` into counts proportional to `weights` (largest remainder, ties to the lower index).
fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        (raw[j] - raw[j].floor())
            .total_cmp(&(raw[i] - raw[i].floor()))
            .then(i.cmp(&j))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Samples in bin `b` get confidence `bin_confidences[b]` and are correct with
/// probability `bin_accuracies[b]`; bin sizes follow `bin_weights`.
pub fn gen_calibration_profile(
    n_test: usize,
    bin_accuracies: &[f64],
    bin_confidences: &[f64],
    bin_weights: &[f64],
    seed: u64,
) -> Result<CalibrationFragment> {
    let k = bin_accuracies.len();
    if bin_confidences.len() != k || bin_weights.len() != k || k == 0 {
        return Err(Error::invalid(
            "profile sequences must be nonempty and of equal length",
        ));
    }
    let in_unit = |v: &f64| (0.0..=1.0).contains(v);
    if !bin_accuracies.iter().all(in_unit)
        || !bin_confidences.iter().all(in_unit)
        || !bin_weights.iter().all(in_unit)
    {
        return Err(Error::invalid(
            "profile accuracies, confidences and weights must lie in [0, 1]",
        ));
    }
    if (bin_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("bin weights must sum to 1"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut correct = Vec::with_capacity(n_test);
    let mut confidences = Vec::with_capacity(n_test);
    for (b, count) in allocate(n_test, bin_weights).into_iter().enumerate() {
        for _ in 0..count {
            correct.push(rng.random::<f64>() < bin_accuracies[b]);
            confidences.push(bin_confidences[b]);
        }
    }
    // Interleave bins so sample order carries no information.
    let mut order: Vec<usize> = (0..n_test).collect();
    order.shuffle(&mut rng);
    Ok(CalibrationFragment {
        correct: order.iter().map(|&i| correct[i]).collect(),
        confidences: order.iter().map(|&i| confidences[i]).collect(),
    })
}

/// Rows drawn from `Normal(0, diag(k^-beta))`, `k = 1..=n_features`.
pub fn gen_planted_spectrum(
    beta: f64,
    n_features: usize,
    n_samples: usize,
    seed: u64,
) -> Result<DataMatrix> {
    if !(beta >= 0.0) {
        return Err(Error::invalid("planted beta must be nonnegative"));
    }
    let scales: Vec<f64> = (1..=n_features)
        .map(|k| (k as f64).powf(-beta / 2.0))
        .collect();
    let mut rng = stream_rng(seed, 0);
    let mut data = Vec::with_capacity(n_samples * n_features);
    for _ in 0..n_samples {
        for s in &scales {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(s * z);
        }
    }
    DataMatrix::from_row_major(n_samples, n_features, data)
}

/// A record whose class `c` has `Binomial(n_per_class, p)` correct samples.
#[derive(Debug, Clone)]
pub struct BinomialClasses {
    pub manifest: DatasetManifest,
    pub correct_counts: Vec<u64>,
    pub record: RunRecord,
}

pub fn gen_binomial_classes(
    p: f64,
    n_classes: usize,
    n_per_class: usize,
    seed: u64,
) -> Result<BinomialClasses> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p = {p} is outside [0, 1]")));
    }
    if n_classes < 2 || n_per_class == 0 {
        return Err(Error::invalid(
            "need at least 2 classes and 1 sample per class",
        ));
    }
    let manifest = balanced_manifest("synthetic-binomial", n_classes, n_per_class);
    let dist = Binomial::new(n_per_class as u64, p).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = stream_rng(seed, 0);
    let correct_counts: Vec<u64> = (0..n_classes).map(|_| dist.sample(&mut rng)).collect();
    let mut seen = vec![0u64; n_classes];
    let correct: Vec<bool> = manifest
        .true_labels
        .iter()
        .map(|&t| {
            let c = t as usize;
            seen[c] += 1;
            seen[c] <= correct_counts[c]
        })
        .collect();
    let confidences = vec![p; manifest.n_test];
    let id = RunIdentity::new("synthetic", "binomial", 1, 0);
    let record = record_from_correctness(&manifest, &id, &correct, confidences, &mut rng);
    Ok(BinomialClasses {
        manifest,
        correct_counts,
        record,
    })
}

/// One architecture of a synthetic multi-configuration corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    /// Planted error-rate exponent.
    pub alpha: f64,
    /// ln of the error rate at N = 1.
    pub intercept: f64,
    pub configs: Vec<ConfigSpec>,
    /// Planted training-loss exponent and log intercept.
    pub loss_alpha: f64,
    pub loss_intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpec {
    pub config_id: String,
    pub width_param: f64,
    pub n_params: u64,
}

/// A corpus in which every run's error rate follows a planted power law and
/// error sets share structure through a latent per-sample difficulty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub dataset_id: String,
    pub n_classes: usize,
    pub n_per_class: usize,
    pub n_seeds: usize,
    pub archs: Vec<ArchSpec>,
    /// Log-normal noise on each run's error rate.
    pub noise_sigma: f64,
    /// Spread of per-class difficulty offsets (class triage).
    pub class_spread: f64,
    /// Per-run noise added to the latent difficulty before ranking; larger
    /// values lower the overlap between runs.
    pub run_noise: f64,
    pub conf_correct: (f64, f64),
    pub conf_incorrect: (f64, f64),
}

impl Default for CorpusSpec {
    fn default() -> Self {
        let cnn = [
            (4, 21_936),
            (8, 80_348),
            (16, 306_900),
            (32, 1_198_916),
            (64, 4_738_596),
        ];
        CorpusSpec {
            dataset_id: "synthetic-c100".into(),
            n_classes: 100,
            n_per_class: 100,
            n_seeds: 5,
            archs: vec![ArchSpec {
                name: "ScaleCNN".into(),
                alpha: 0.156,
                intercept: 1.0,
                configs: cnn
                    .iter()
                    .map(|&(c, n)| ConfigSpec {
                        config_id: format!("c{c}"),
                        width_param: c as f64,
                        n_params: n,
                    })
                    .collect(),
                loss_alpha: 0.84,
                loss_intercept: 6.0,
            }],
            noise_sigma: 0.01,
            class_spread: 0.8,
            run_noise: 0.6,
            conf_correct: (0.45, 0.95),
            conf_incorrect: (0.1, 0.6),
        }
    }
}

/// Generate a full corpus from `spec`; identical `(spec, seed)` give identical records.
pub fn gen_corpus(spec: &CorpusSpec, seed: u64) -> Result<Corpus> {
    if spec.n_classes < 2 || spec.n_per_class == 0 || spec.n_seeds == 0 {
        return Err(Error::invalid(
            "corpus needs ≥ 2 classes, ≥ 1 sample per class and ≥ 1 seed",
        ));
    }
    for (lo, hi) in [spec.conf_correct, spec.conf_incorrect] {
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(
                "confidence ranges must satisfy 0 ≤ lo ≤ hi ≤ 1",
            ));
        }
    }
    let manifest = balanced_manifest(&spec.dataset_id, spec.n_classes, spec.n_per_class);
    let n = manifest.n_test;
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;

    let mut base = stream_rng(seed, 0);
    let class_offset: Vec<f64> = (0..spec.n_classes)
        .map(|_| spec.class_spread * Distribution::<f64>::sample(&StandardNormal, &mut base))
        .collect();
    let difficulty: Vec<f64> = manifest
        .true_labels
        .iter()
        .map(|&t| {
            Distribution::<f64>::sample(&StandardNormal, &mut base) + class_offset[t as usize]
        })
        .collect();

    let mut records = Vec::new();
    let mut stream = 1u64;
    for arch in &spec.archs {
        for cfg in &arch.configs {
            for s in 0..spec.n_seeds {
                let mut rng = stream_rng(seed, stream);
                stream += 1;
                let ln_n = (cfg.n_params as f64).ln();
                let err = (arch.intercept - arch.alpha * ln_n + noise.sample(&mut rng))
                    .exp()
                    .clamp(0.0, 1.0);
                let n_wrong = (err * n as f64).round() as usize;
                let mut score: Vec<(f64, usize)> = difficulty
                    .iter()
                    .enumerate()
                    .map(|(i, d)| {
                        (
                            d + spec.run_noise
                                * Distribution::<f64>::sample(&StandardNormal, &mut rng),
                            i,
                        )
                    })
                    .collect();
                score.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                let mut correct = vec![true; n];
                for &(_, i) in &score[..n_wrong] {
                    correct[i] = false;
                }
                let confidences = correct
                    .iter()
                    .map(|&ok| {
                        let (lo, hi) = if ok {
                            spec.conf_correct
                        } else {
                            spec.conf_incorrect
                        };
                        lo + (hi - lo) * rng.random::<f64>()
                    })
                    .collect();
                let id = RunIdentity {
                    arch: arch.name.clone(),
                    config_id: cfg.config_id.clone(),
                    width_param: cfg.width_param,
                    n_params: cfg.n_params,
                    seed: s as i64,
                };
                let mut record =
                    record_from_correctness(&manifest, &id, &correct, confidences, &mut rng);
                record.final_train_loss = Some(
                    (arch.loss_intercept - arch.loss_alpha * ln_n + noise.sample(&mut rng)).exp(),
                );
                records.push(record);
            }
        }
    }
    Corpus::new(manifest, records)
}

/// Serializable description of one generator invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum SynthKind {
    PowerLawCurve {
        alpha: f64,
        intercept: f64,
        noise_sigma: f64,
        sizes: Vec<u64>,
        n_seeds: usize,
        n_classes: usize,
        n_per_class: usize,
    },
    OverlapMasks {
        n_classes: usize,
        n_per_class: usize,
        e_a: f64,
        e_b: f64,
        target_jaccard: f64,
    },
    CalibrationProfile {
        n_classes: usize,
        n_per_class: usize,
        bin_accuracies: Vec<f64>,
        bin_confidences: Vec<f64>,
        bin_weights: Vec<f64>,
    },
    PlantedSpectrum {
        beta: f64,
        n_features: usize,
        n_samples: usize,
    },
    BinomialClasses {
        p: f64,
        n_classes: usize,
        n_per_class: usize,
    },
    Corpus(CorpusSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(flatten)]
    pub kind: SynthKind,
    pub seed: u64,
}

/// What a [`SynthSpec`] produces.
#[derive(Debug, Clone)]
pub enum SynthOutput {
    Corpus(Corpus),
    Matrix(DataMatrix),
}

impl SynthSpec {
    pub fn generate(&self) -> Result<SynthOutput> {
        let seed = self.seed;
        Ok(match &self.kind {
            SynthKind::PowerLawCurve {
                alpha,
                intercept,
                noise_sigma,
                sizes,
                n_seeds,
                n_classes,
                n_per_class,
            } => {
                let points =
                    gen_power_law_runs(*alpha, *intercept, *noise_sigma, sizes, *n_seeds, seed)?;
                let manifest = balanced_manifest("synthetic-power-law", *n_classes, *n_per_class);
                SynthOutput::Corpus(points_to_corpus(&points, "synthetic", manifest, seed)?)
            }
            SynthKind::OverlapMasks {
                n_classes,
                n_per_class,
                e_a,
                e_b,
                target_jaccard,
            } => {
                let manifest = balanced_manifest("synthetic-overlap", *n_classes, *n_per_class);
                let (a, b) = gen_overlap_masks(manifest.n_test, *e_a, *e_b, *target_jaccard, seed)?;
                let mut rng = stream_rng(seed, 1);
                let records = [("a", &a), ("b", &b)]
                    .into_iter()
                    .map(|(cfg, mask)| {
                        let correct: Vec<bool> =
                            (0..mask.len()).map(|i| !mask.is_wrong(i)).collect();
                        let conf = vec![0.5; mask.len()];
                        record_from_correctness(
                            &manifest,
                            &RunIdentity::new("synthetic", cfg, 1, 0),
                            &correct,
                            conf,
                            &mut rng,
                        )
                    })
                    .collect();
                SynthOutput::Corpus(Corpus::new(manifest, records)?)
            }
            SynthKind::CalibrationProfile {
                n_classes,
                n_per_class,
                bin_accuracies,
                bin_confidences,
                bin_weights,
            } => {
                let manifest = balanced_manifest("synthetic-calibration", *n_classes, *n_per_class);
                let frag = gen_calibration_profile(
                    manifest.n_test,
                    bin_accuracies,
                    bin_confidences,
                    bin_weights,
                    seed,
                )?;
                let id = RunIdentity::new("synthetic", "profile", 1, 0);
                let record = record_from_correctness(
                    &manifest,
                    &id,
                    &frag.correct,
                    frag.confidences,
                    &mut stream_rng(seed, 1),
                );
                SynthOutput::Corpus(Corpus::new(manifest, vec![record])?)
            }
            SynthKind::PlantedSpectrum {
                beta,
                n_features,
                n_samples,
            } => SynthOutput::Matrix(gen_planted_spectrum(*beta, *n_features, *n_samples, seed)?),
            SynthKind::BinomialClasses {
                p,
                n_classes,
                n_per_class,
            } => {
                let g = gen_binomial_classes(*p, *n_classes, *n_per_class, seed)?;
                SynthOutput::Corpus(Corpus::new(g.manifest, vec![g.record])?)
            }
            SynthKind::Corpus(spec) => SynthOutput::Corpus(gen_corpus(spec, seed)?),
        })
    }
}
