use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use scalelens::fairness::Ranking;
use scalelens::matrix_io;
use scalelens::record::{self, Corpus};
use scalelens::report::{self, CsvTable, ReportOptions};
use scalelens::scaling::{Metric, SaturationThresholds, ScalingFit};
use scalelens::spectral::{self, CovarianceAccumulator, EigenSpectrum, SpectrumOptions};
use scalelens::synth::{CorpusSpec, SynthKind, SynthOutput, SynthSpec};
use scalelens::Error;

#[derive(Parser)]
#[command(
    name = "scalelens",
    version,
    about = "Scaling, error-overlap, fairness and calibration analyses over evaluation records"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Dataset manifest (JSON).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Run records: a JSONL file or a directory of *.jsonl files.
    #[arg(long, global = true)]
    records: Option<PathBuf>,
    /// Write output files here instead of printing to stdout.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Stdout format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Seed for every bootstrap and Monte-Carlo draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "SCALELENS_THREADS")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check a manifest and its records against every schema rule.
    Validate,
    /// Fit error(N) = a N^-alpha per architecture and compare exponents.
    FitScaling {
        #[arg(long, value_enum, default_value_t = MetricArg::Error)]
        metric: MetricArg,
    },
    /// Local exponents between consecutive sizes, with saturation labels.
    LocalExponents(ThresholdArgs),
    /// Mean error-set Jaccard for every pair of configurations.
    JaccardMatrix(BootstrapArgs),
    /// Per-class Gini, binomial null and hardest/easiest-class means.
    Fairness(FairnessArgs),
    /// Expected calibration error and reliability-diagram bins.
    Calibration(BinArgs),
    /// Eigenspectrum of a sample matrix and its power-law decay fit.
    Spectral(SpectralArgs),
    /// alpha = gamma (beta - 1), or the gamma implied by a measured alpha.
    PredictAlpha(PredictArgs),
    /// Write a synthetic corpus or matrix with planted parameters.
    Synth(SynthArgs),
    /// Every analysis at once: five CSV tables plus report.json.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Error,
    TrainLoss,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Largest local exponent labelled saturated.
    #[arg(long, default_value_t = 0.01)]
    saturated: f64,
    /// Largest local exponent labelled diminishing.
    #[arg(long, default_value_t = 0.05)]
    diminishing: f64,
}

impl ThresholdArgs {
    fn thresholds(&self) -> Result<SaturationThresholds, CliError> {
        let ordered = self.saturated.partial_cmp(&self.diminishing);
        if !matches!(
            ordered,
            Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)
        ) {
            return Err(CliError::Usage(
                "--saturated must not exceed --diminishing".into(),
            ));
        }
        Ok(SaturationThresholds {
            saturated: self.saturated,
            diminishing: self.diminishing,
        })
    }
}

#[derive(Args)]
struct BootstrapArgs {
    #[arg(long, default_value_t = 10_000)]
    bootstrap_resamples: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum RankingArg {
    PerSeed,
    Pooled,
    Reference,
}

#[derive(Args)]
struct FairnessArgs {
    /// How hardest and easiest classes are chosen.
    #[arg(long, value_enum, default_value_t = RankingArg::PerSeed)]
    ranking: RankingArg,
    /// Reference configuration as ARCH:CONFIG_ID (with --ranking reference).
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    null_trials: usize,
    #[arg(long, default_value_t = 10_000)]
    bootstrap_resamples: usize,
}

impl FairnessArgs {
    fn ranking(&self) -> Result<Ranking, CliError> {
        match (self.ranking, &self.reference) {
            (RankingArg::PerSeed, None) => Ok(Ranking::PerSeed),
            (RankingArg::Pooled, None) => Ok(Ranking::Pooled),
            (RankingArg::Reference, Some(r)) => {
                let (arch, config_id) = r.split_once(':').ok_or_else(|| {
                    CliError::Usage(format!("--reference {r}: expected ARCH:CONFIG_ID"))
                })?;
                Ok(Ranking::Reference {
                    arch: arch.into(),
                    config_id: config_id.into(),
                })
            }
            (RankingArg::Reference, None) => Err(CliError::Usage(
                "--ranking reference needs --reference".into(),
            )),
            (_, Some(_)) => Err(CliError::Usage(
                "--reference is only valid with --ranking reference".into(),
            )),
        }
    }
}

#[derive(Args)]
struct BinArgs {
    #[arg(long, default_value_t = scalelens::calibration::DEFAULT_BINS)]
    bins: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Npy,
    RawF64,
    Cifar100Bin,
    PngDir,
}

#[derive(Args)]
struct SpectralArgs {
    /// Sample matrix, one row per sample.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputFormat::Npy)]
    input_format: InputFormat,
    /// Row count (raw-f64 only).
    #[arg(long)]
    rows: Option<usize>,
    /// Column count (raw-f64 only).
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, default_value_t = spectral::DEFAULT_K_MIN)]
    k_min: usize,
    #[arg(long, default_value_t = spectral::DEFAULT_K_MAX)]
    k_max: usize,
    /// Above this many features the spectrum comes from an SVD of the data.
    #[arg(long, default_value_t = spectral::DEFAULT_DIRECT_MAX_FEATURES)]
    direct_threshold: usize,
}

#[derive(Args)]
struct PredictArgs {
    /// Eigenspectrum decay exponent.
    #[arg(long)]
    beta: f64,
    /// Capacity exponent.
    #[arg(long, conflicts_with = "alpha")]
    gamma: Option<f64>,
    /// Measured scaling exponent; prints the implied gamma instead.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    PowerLawCurve,
    OverlapMasks,
    CalibrationProfile,
    PlantedSpectrum,
    BinomialClasses,
    Corpus,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator with its default parameters.
    #[arg(
        long,
        value_enum,
        conflicts_with = "spec",
        required_unless_present = "spec"
    )]
    kind: Option<KindArg>,
    /// JSON generator spec: {"kind": ..., "params": {...}, "seed": ...}.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[command(flatten)]
    fairness: FairnessArgs,
    #[command(flatten)]
    bins: BinArgs,
    /// Optional sample matrix whose spectral fit is added to the report.
    #[arg(long)]
    spectral_input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InputFormat::Npy)]
    spectral_format: InputFormat,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Analysis(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Analysis(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return fail(CliError::Usage("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            return fail(CliError::Usage(format!(
                "cannot configure thread pool: {e}"
            )));
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    match e {
        CliError::Usage(msg) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        CliError::Analysis(err) => {
            let body = json!({"error": {"kind": err.kind(), "message": err.to_string()}});
            eprintln!("{body}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> CliResult {
    let g = &cli.global;
    match &cli.command {
        Command::Validate => {
            let corpus = load(g)?;
            let summary = json!({
                "valid": true,
                "dataset_id": corpus.manifest.dataset_id,
                "n_test": corpus.manifest.n_test,
                "n_classes": corpus.manifest.n_classes,
                "balanced": corpus.manifest.is_balanced(),
                "n_records": corpus.records.len(),
                "configs": corpus.configs().iter().map(|c| c.label()).collect::<Vec<_>>(),
                "corpus_fingerprint": report::corpus_fingerprint(&corpus),
            });
            emit_json(g, "validate.json", &summary)
        }
        Command::FitScaling { metric } => {
            let corpus = load(g)?;
            let metric = match metric {
                MetricArg::Error => Metric::ErrorRate,
                MetricArg::TrainLoss => Metric::TrainLoss,
            };
            fit_scaling(g, &corpus, metric)
        }
        Command::LocalExponents(t) => {
            let corpus = load(g)?;
            let mut skipped = Vec::new();
            let (scaling, _) = report::scaling_section(&corpus, t.thresholds()?, &mut skipped)?;
            let rows: Vec<_> = scaling
                .into_iter()
                .flat_map(|s| s.local_exponents)
                .collect();
            emit(
                g,
                "local_exponents",
                &report::local_exponent_table(&rows),
                &json!({"local_exponents": rows, "skipped": skipped}),
            )
        }
        Command::JaccardMatrix(b) => {
            let corpus = load(g)?;
            check_resamples(b.bootstrap_resamples)?;
            let m = report::overlap_section(&corpus, b.bootstrap_resamples, g.seed)?;
            let table = report::jaccard_matrix_table(&m);
            match &g.out_dir {
                Some(dir) => {
                    write_out(dir, "jaccard_matrix.csv", &table.render())?;
                    write_out(dir, "jaccard_pairs.json", &report::to_stable_json(&m))
                }
                None if g.format == Some(Format::Json) => print(&report::to_stable_json(&m)),
                None => print(&table.render()),
            }
        }
        Command::Fairness(f) => {
            let corpus = load(g)?;
            check_resamples(f.bootstrap_resamples)?;
            check_trials(f.null_trials)?;
            let options = ReportOptions {
                seed: g.seed,
                null_trials: f.null_trials,
                bootstrap_resamples: f.bootstrap_resamples,
                ranking: f.ranking()?,
                ..ReportOptions::default()
            };
            let mut skipped = Vec::new();
            let (summaries, differences) =
                report::fairness_section(&corpus, &options, &mut skipped)?;
            let body = json!({
                "fairness": summaries,
                "gini_differences": differences,
                "conventions": report::conventions(&corpus, &options),
                "skipped": skipped,
            });
            emit(g, "fairness", &report::fairness_table(&summaries), &body)
        }
        Command::Calibration(b) => {
            let corpus = load(g)?;
            check_bins(b.bins)?;
            let rows = report::calibration_section(&corpus, b.bins)?;
            let reliability = report::reliability_table(&rows);
            match &g.out_dir {
                Some(dir) => {
                    write_out(dir, "reliability.csv", &reliability.render())?;
                    write_out(
                        dir,
                        "calibration.csv",
                        &report::calibration_table(&rows).render(),
                    )?;
                    write_out(dir, "calibration.json", &report::to_stable_json(&rows))
                }
                None if g.format == Some(Format::Json) => print(&report::to_stable_json(&rows)),
                None => print(&reliability.render()),
            }
        }
        Command::Spectral(s) => spectral_cmd(g, s),
        Command::PredictAlpha(p) => predict_alpha(g, p),
        Command::Synth(s) => synth(g, s),
        Command::Report(r) => report_cmd(g, r),
    }
}

fn load(g: &Global) -> CliResult<Corpus> {
    let manifest = g
        .manifest
        .as_deref()
        .ok_or_else(|| CliError::Usage("this command needs --manifest".into()))?;
    let records = g
        .records
        .as_deref()
        .ok_or_else(|| CliError::Usage("this command needs --records".into()))?;
    Ok(record::load_corpus(manifest, records)?)
}

fn check_resamples(n: usize) -> CliResult {
    if n < 1000 {
        return Err(CliError::Usage(format!(
            "--bootstrap-resamples {n}: at least 1000 required"
        )));
    }
    Ok(())
}

fn check_trials(n: usize) -> CliResult {
    if n < 1000 {
        return Err(CliError::Usage(format!(
            "--null-trials {n}: at least 1000 required"
        )));
    }
    Ok(())
}

fn check_bins(n: usize) -> CliResult {
    if n == 0 {
        return Err(CliError::Usage("--bins must be at least 1".into()));
    }
    Ok(())
}

fn print(text: &str) -> CliResult {
    print!("{text}");
    Ok(())
}

fn write_out(dir: &Path, name: &str, contents: &str) -> CliResult {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| Error::Io { path, source })?;
    Ok(())
}

fn emit_json<T: Serialize>(g: &Global, file: &str, value: &T) -> CliResult {
    let text = report::to_stable_json(value);
    match &g.out_dir {
        Some(dir) => write_out(dir, file, &text),
        None => print(&text),
    }
}

/// CSV table plus its JSON counterpart: both files with `--out-dir`,
/// otherwise one of them on stdout according to `--format` (CSV by default).
fn emit<T: Serialize>(g: &Global, stem: &str, table: &CsvTable, value: &T) -> CliResult {
    match &g.out_dir {
        Some(dir) => {
            write_out(dir, &format!("{stem}.csv"), &table.render())?;
            write_out(dir, &format!("{stem}.json"), &report::to_stable_json(value))
        }
        None if g.format == Some(Format::Json) => print(&report::to_stable_json(value)),
        None => print(&table.render()),
    }
}

fn fit_scaling(g: &Global, corpus: &Corpus, metric: Metric) -> CliResult {
    let mut skipped = Vec::new();
    let (scaling, comparisons) =
        report::scaling_section(corpus, SaturationThresholds::default(), &mut skipped)?;
    let fits: Vec<(String, ScalingFit)> = scaling
        .into_iter()
        .filter_map(|s| {
            let fit = match metric {
                Metric::ErrorRate => s.error_fit,
                Metric::TrainLoss => s.train_loss_fit,
            };
            fit.map(|f| (s.arch, f))
        })
        .collect();
    if fits.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no architecture has the 3 model sizes a {} fit needs",
            metric.as_str()
        ))
        .into());
    }
    let mut table = CsvTable::new(&[
        "arch",
        "metric",
        "alpha",
        "intercept",
        "r_squared",
        "n_points",
        "alpha_seed_mean",
        "alpha_seed_std",
        "ci95_lo",
        "ci95_hi",
    ]);
    let opt = |x: Option<f64>| x.map(report::fmt_f64).unwrap_or_default();
    for (arch, f) in &fits {
        let ps = f.per_seed.as_ref();
        table.push(vec![
            arch.clone(),
            f.metric.as_str().to_string(),
            report::fmt_f64(f.alpha),
            report::fmt_f64(f.intercept),
            report::fmt_f64(f.r_squared),
            f.n_points.to_string(),
            opt(ps.map(|p| p.mean)),
            opt(ps.and_then(|p| p.std)),
            opt(ps.and_then(|p| p.ci95).map(|c| c.0)),
            opt(ps.and_then(|p| p.ci95).map(|c| c.1)),
        ]);
    }
    let fits_json: Vec<_> = fits
        .iter()
        .map(|(arch, fit)| json!({"arch": arch, "fit": fit}))
        .collect();
    let body = json!({
        "fits": fits_json,
        "comparisons": if metric == Metric::ErrorRate { json!(comparisons) } else { json!([]) },
        "skipped": skipped,
    });
    emit(g, "scaling_fit", &table, &body)
}

fn load_spectrum(
    path: &Path,
    format: InputFormat,
    rows: Option<usize>,
    cols: Option<usize>,
    direct: usize,
) -> CliResult<EigenSpectrum> {
    let opts = SpectrumOptions {
        direct_max_features: direct,
    };
    let matrix = match format {
        InputFormat::Npy => matrix_io::load_npy(path)?,
        InputFormat::RawF64 => {
            let (Some(r), Some(c)) = (rows, cols) else {
                return Err(CliError::Usage(
                    "--input-format raw-f64 needs --rows and --cols".into(),
                ));
            };
            matrix_io::load_raw_f64(path, r, c)?
        }
        InputFormat::PngDir => matrix_io::load_png_dir(path)?,
        InputFormat::Cifar100Bin => {
            let mut acc = CovarianceAccumulator::new(matrix_io::CIFAR_PIXELS);
            matrix_io::accumulate_cifar100(path, &mut acc)?;
            return Ok(acc.into_spectrum()?);
        }
    };
    Ok(spectral::covariance_spectrum(&matrix, opts)?)
}

fn spectral_cmd(g: &Global, s: &SpectralArgs) -> CliResult {
    if s.input_format != InputFormat::RawF64 && (s.rows.is_some() || s.cols.is_some()) {
        return Err(CliError::Usage(
            "--rows/--cols only apply to --input-format raw-f64".into(),
        ));
    }
    let spectrum = load_spectrum(&s.input, s.input_format, s.rows, s.cols, s.direct_threshold)?;
    let fit = spectral::fit_spectral_decay(&spectrum, s.k_min, s.k_max)?;
    let mut table = CsvTable::new(&["k", "eigenvalue"]);
    for (i, v) in spectrum.eigenvalues.iter().enumerate() {
        table.push(vec![
            (i + 1).to_string(),
            format!(
                "{:e}",
                scalelens::stats::round_sig(*v, report::REPORT_DIGITS)
            ),
        ]);
    }
    let body = json!({
        "fit": fit,
        "n_samples": spectrum.n_samples,
        "n_features": spectrum.n_features,
        "centering": spectrum.centering,
        "naive_alpha": spectral::predict_alpha(fit.beta, spectral::NAIVE_GAMMA)?,
    });
    match &g.out_dir {
        Some(dir) => {
            write_out(dir, "eigenvalues.csv", &table.render())?;
            write_out(dir, "spectral_fit.json", &report::to_stable_json(&body))
        }
        None if g.format == Some(Format::Csv) => print(&table.render()),
        None => print(&report::to_stable_json(&body)),
    }
}

fn predict_alpha(g: &Global, p: &PredictArgs) -> CliResult {
    let (name, value) = match (p.gamma, p.alpha) {
        (_, Some(alpha)) => ("gamma", spectral::implied_gamma(alpha, p.beta)?),
        (gamma, None) => (
            "alpha",
            spectral::predict_alpha(p.beta, gamma.unwrap_or(spectral::NAIVE_GAMMA))?,
        ),
    };
    let value = scalelens::stats::round_sig(value, report::REPORT_DIGITS);
    if g.format == Some(Format::Json) {
        let mut body = serde_json::Map::new();
        body.insert("beta".into(), json!(p.beta));
        body.insert(name.into(), json!(value));
        print(&report::to_stable_json(&body))
    } else {
        print(&format!("{value}\n"))
    }
}

fn default_spec(kind: KindArg, seed: u64) -> SynthSpec {
    let kind = match kind {
        KindArg::PowerLawCurve => SynthKind::PowerLawCurve {
            alpha: 0.156,
            intercept: 1.0,
            noise_sigma: 0.01,
            sizes: vec![75_000, 300_000, 1_200_000, 4_700_000, 19_000_000],
            n_seeds: 5,
            n_classes: 100,
            n_per_class: 100,
        },
        KindArg::OverlapMasks => SynthKind::OverlapMasks {
            n_classes: 100,
            n_per_class: 100,
            e_a: 0.45,
            e_b: 0.25,
            target_jaccard: 0.35,
        },
        KindArg::CalibrationProfile => SynthKind::CalibrationProfile {
            n_classes: 100,
            n_per_class: 100,
            bin_accuracies: vec![0.3, 0.6, 0.9],
            bin_confidences: vec![0.35, 0.65, 0.95],
            bin_weights: vec![0.2, 0.3, 0.5],
        },
        KindArg::PlantedSpectrum => SynthKind::PlantedSpectrum {
            beta: 1.45,
            n_features: 256,
            n_samples: 4096,
        },
        KindArg::BinomialClasses => SynthKind::BinomialClasses {
            p: 0.75,
            n_classes: 100,
            n_per_class: 100,
        },
        KindArg::Corpus => SynthKind::Corpus(CorpusSpec::default()),
    };
    SynthSpec { kind, seed }
}

fn synth(g: &Global, s: &SynthArgs) -> CliResult {
    let dir = g
        .out_dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("synth needs --out-dir".into()))?;
    let spec = match (&s.spec, s.kind) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str::<SynthSpec>(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?
        }
        (None, Some(kind)) => default_spec(kind, g.seed),
        (None, None) => unreachable!("clap requires --kind or --spec"),
    };
    write_out(dir, "spec.json", &report::to_stable_json(&spec))?;
    match spec.generate()? {
        SynthOutput::Corpus(corpus) => {
            corpus.write(&dir.join("manifest.json"), &dir.join("records.jsonl"))?
        }
        SynthOutput::Matrix(m) => matrix_io::write_npy(&dir.join("matrix.npy"), &m)?,
    }
    Ok(())
}

fn report_cmd(g: &Global, r: &ReportArgs) -> CliResult {
    let corpus = load(g)?;
    check_resamples(r.fairness.bootstrap_resamples)?;
    check_trials(r.fairness.null_trials)?;
    check_bins(r.bins.bins)?;
    let options = ReportOptions {
        seed: g.seed,
        n_bins: r.bins.bins,
        bootstrap_resamples: r.fairness.bootstrap_resamples,
        null_trials: r.fairness.null_trials,
        thresholds: r.thresholds.thresholds()?,
        ranking: r.fairness.ranking()?,
    };
    let spectral_fit = match &r.spectral_input {
        Some(path) => {
            let spectrum = load_spectrum(
                path,
                r.spectral_format,
                None,
                None,
                spectral::DEFAULT_DIRECT_MAX_FEATURES,
            )?;
            Some(spectral::fit_spectral_decay(
                &spectrum,
                spectral::DEFAULT_K_MIN,
                spectral::DEFAULT_K_MAX,
            )?)
        }
        None => None,
    };
    let bundle = report::run_report(&corpus, &options, spectral_fit)?;
    match &g.out_dir {
        Some(dir) => {
            report::write_report(&bundle, dir)?;
            Ok(())
        }
        None => print(&report::to_stable_json(&bundle)),
    }
}
