//! Evaluation records, dataset manifests, and the quantities derived from them.
//!
//! A corpus is one [`DatasetManifest`] (the ground truth, stored once) plus any
//! number of [`RunRecord`]s, one per trained model. Records only carry
//! predictions and max-probability confidences; error masks and per-class
//! accuracies are always derived from the pair, never stored.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The only record/manifest schema version this crate reads and writes.
pub const SCHEMA_VERSION: &str = "1";

/// Ground-truth labels of the test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: String,
    pub dataset_id: String,
    pub n_test: usize,
    pub n_classes: usize,
    pub true_labels: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

impl DatasetManifest {
    pub fn new(dataset_id: impl Into<String>, n_classes: usize, true_labels: Vec<u32>) -> Self {
        DatasetManifest {
            schema_version: SCHEMA_VERSION.to_string(),
            dataset_id: dataset_id.into(),
            n_test: true_labels.len(),
            n_classes,
            true_labels,
            class_names: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = format!("manifest {}", self.dataset_id);
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(
                ctx,
                format!("unsupported schema_version {:?}", self.schema_version),
            ));
        }
        check_identifier(&ctx, "dataset_id", &self.dataset_id)?;
        if self.n_test == 0 {
            return Err(Error::validation(ctx, "n_test must be positive"));
        }
        if self.n_classes < 2 {
            return Err(Error::validation(ctx, "n_classes must be at least 2"));
        }
        if self.true_labels.len() != self.n_test {
            return Err(Error::LengthMismatch {
                what: "manifest true_labels".into(),
                expected: self.n_test,
                found: self.true_labels.len(),
            });
        }
        if let Some(i) = self
            .true_labels
            .iter()
            .position(|&l| l as usize >= self.n_classes)
        {
            return Err(Error::validation(
                ctx,
                format!(
                    "true_labels[{i}] = {} is outside [0, {})",
                    self.true_labels[i], self.n_classes
                ),
            ));
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.n_classes {
                return Err(Error::LengthMismatch {
                    what: "manifest class_names".into(),
                    expected: self.n_classes,
                    found: names.len(),
                });
            }
        }
        Ok(())
    }

    /// Number of test samples in each class.
    pub fn class_support(&self) -> Vec<usize> {
        let mut support = vec![0; self.n_classes];
        for &l in &self.true_labels {
            support[l as usize] += 1;
        }
        support
    }

    /// True when every class has the same number of test samples.
    pub fn is_balanced(&self) -> bool {
        let support = self.class_support();
        support.iter().all(|&s| s == support[0])
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// One trained model's evaluation over the manifest's test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema_version: String,
    pub dataset_id: String,
    pub arch: String,
    pub config_id: String,
    /// Base channel count or width multiplier.
    pub width_param: f64,
    pub n_params: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macs: Option<u64>,
    pub seed: i64,
    pub pred_labels: Vec<u32>,
    /// Maximum predicted class probability per sample.
    pub confidences: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top5_pred_labels: Option<Vec<[u32; 5]>>,
}

/// Identity of one run within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub arch: String,
    pub config_id: String,
    pub seed: i64,
}

impl RunRecord {
    pub fn key(&self) -> RunKey {
        RunKey {
            arch: self.arch.clone(),
            config_id: self.config_id.clone(),
            seed: self.seed,
        }
    }

    pub fn validate(&self, manifest: &DatasetManifest) -> Result<()> {
        let ctx = format!(
            "record arch={} config_id={} seed={}",
            self.arch, self.config_id, self.seed
        );
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::validation(
                ctx,
                format!("unsupported schema_version {:?}", self.schema_version),
            ));
        }
        check_identifier(&ctx, "arch", &self.arch)?;
        check_identifier(&ctx, "config_id", &self.config_id)?;
        if self.dataset_id != manifest.dataset_id {
            return Err(Error::validation(
                ctx,
                format!(
                    "dataset_id {:?} does not match manifest {:?}",
                    self.dataset_id, manifest.dataset_id
                ),
            ));
        }
        if !self.width_param.is_finite() {
            return Err(Error::validation(ctx, "width_param must be finite"));
        }
        if self.n_params == 0 {
            return Err(Error::validation(ctx, "n_params must be positive"));
        }
        if self.macs == Some(0) {
            return Err(Error::validation(ctx, "macs must be positive when present"));
        }
        if let Some(loss) = self.final_train_loss {
            if !(loss >= 0.0 && loss.is_finite()) {
                return Err(Error::validation(
                    ctx,
                    format!("final_train_loss = {loss} is not a nonnegative finite value"),
                ));
            }
        }
        for (what, len) in [
            ("pred_labels", self.pred_labels.len()),
            ("confidences", self.confidences.len()),
        ] {
            if len != manifest.n_test {
                return Err(Error::LengthMismatch {
                    what: format!("{ctx} {what}"),
                    expected: manifest.n_test,
                    found: len,
                });
            }
        }
        if let Some(i) = self
            .pred_labels
            .iter()
            .position(|&l| l as usize >= manifest.n_classes)
        {
            return Err(Error::validation(
                ctx,
                format!(
                    "pred_labels[{i}] = {} is outside [0, {})",
                    self.pred_labels[i], manifest.n_classes
                ),
            ));
        }
        if let Some(i) = self
            .confidences
            .iter()
            .position(|c| !(0.0..=1.0).contains(c))
        {
            return Err(Error::validation(
                ctx,
                format!(
                    "confidences[{i}] = {} is outside [0, 1]",
                    self.confidences[i]
                ),
            ));
        }
        if let Some(top5) = &self.top5_pred_labels {
            if top5.len() != manifest.n_test {
                return Err(Error::LengthMismatch {
                    what: format!("{ctx} top5_pred_labels"),
                    expected: manifest.n_test,
                    found: top5.len(),
                });
            }
            if let Some(i) = top5
                .iter()
                .position(|t| t.iter().any(|&l| l as usize >= manifest.n_classes))
            {
                return Err(Error::validation(
                    ctx,
                    format!(
                        "top5_pred_labels[{i}] has a label outside [0, {})",
                        manifest.n_classes
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Fraction of correct predictions.
    pub fn accuracy(&self, manifest: &DatasetManifest) -> f64 {
        let correct = self
            .pred_labels
            .iter()
            .zip(&manifest.true_labels)
            .filter(|(p, t)| p == t)
            .count();
        correct as f64 / manifest.n_test as f64
    }
}

fn check_identifier(ctx: &str, field: &str, value: &str) -> Result<()> {
    if value.is_empty() {
        return Err(Error::validation(ctx, format!("{field} is empty")));
    }
    if value.contains([',', '\n', '\r', '"']) {
        return Err(Error::validation(
            ctx,
            format!("{field} {value:?} contains a comma, quote, or line break"),
        ));
    }
    Ok(())
}

/// Bitset of misclassified test samples (bit set = wrong).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorMask {
    bits: FixedBitSet,
}

impl ErrorMask {
    /// Mask of length `len` with the given indices set.
    pub fn from_indices(len: usize, wrong: impl IntoIterator<Item = usize>) -> Self {
        let mut bits = FixedBitSet::with_capacity(len);
        for i in wrong {
            bits.insert(i);
        }
        ErrorMask { bits }
    }

    pub fn from_correctness(correct: &[bool]) -> Self {
        Self::from_indices(
            correct.len(),
            correct
                .iter()
                .enumerate()
                .filter(|(_, &c)| !c)
                .map(|(i, _)| i),
        )
    }

    pub fn bits(&self) -> &FixedBitSet {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.len() == 0
    }

    /// Number of misclassified samples.
    pub fn n_errors(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn error_rate(&self) -> f64 {
        self.n_errors() as f64 / self.bits.len() as f64
    }

    pub fn is_wrong(&self, i: usize) -> bool {
        self.bits.contains(i)
    }

    pub fn set_wrong(&mut self, i: usize) {
        self.bits.insert(i);
    }
}

/// Derive the error mask of a validated record.
pub fn error_mask(record: &RunRecord, manifest: &DatasetManifest) -> ErrorMask {
    ErrorMask::from_indices(
        manifest.n_test,
        record
            .pred_labels
            .iter()
            .zip(&manifest.true_labels)
            .enumerate()
            .filter(|(_, (p, t))| p != t)
            .map(|(i, _)| i),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerClassAccuracy {
    pub values: Vec<f64>,
    pub support: Vec<usize>,
}

impl PerClassAccuracy {
    /// Support-weighted mean of the per-class values, i.e. overall accuracy.
    pub fn overall(&self) -> f64 {
        let total: usize = self.support.iter().sum();
        let correct: f64 = self
            .values
            .iter()
            .zip(&self.support)
            .map(|(v, &s)| v * s as f64)
            .sum();
        correct / total as f64
    }
}

pub fn per_class_accuracy(
    record: &RunRecord,
    manifest: &DatasetManifest,
) -> Result<PerClassAccuracy> {
    let support = manifest.class_support();
    if let Some(c) = support.iter().position(|&s| s == 0) {
        return Err(Error::validation(
            format!("manifest {}", manifest.dataset_id),
            format!("class {c} has no test samples"),
        ));
    }
    let mut correct = vec![0usize; manifest.n_classes];
    for (&p, &t) in record.pred_labels.iter().zip(&manifest.true_labels) {
        if p == t {
            correct[t as usize] += 1;
        }
    }
    let values = correct
        .iter()
        .zip(&support)
        .map(|(&c, &s)| c as f64 / s as f64)
        .collect();
    Ok(PerClassAccuracy { values, support })
}

/// All runs sharing one (arch, config_id).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigGroup {
    pub arch: String,
    pub config_id: String,
    pub n_params: u64,
    pub width_param: f64,
    pub macs: Option<u64>,
    /// Indices into [`Corpus::records`], ordered by seed.
    pub runs: Vec<usize>,
}

impl ConfigGroup {
    /// `arch:config_id`, the label used in matrix outputs.
    pub fn label(&self) -> String {
        format!("{}:{}", self.arch, self.config_id)
    }
}

/// A validated manifest together with its run records.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub records: Vec<RunRecord>,
    groups: Vec<ConfigGroup>,
}

impl Corpus {
    /// Validate every record against the manifest and group runs by configuration.
    pub fn new(manifest: DatasetManifest, records: Vec<RunRecord>) -> Result<Self> {
        manifest.validate()?;
        if records.is_empty() {
            return Err(Error::Validation {
                context: None,
                message: "corpus contains no run records".into(),
            });
        }
        let mut seen = BTreeSet::new();
        let mut by_config: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            r.validate(&manifest)?;
            if !seen.insert(r.key()) {
                return Err(Error::DuplicateRun {
                    arch: r.arch.clone(),
                    config_id: r.config_id.clone(),
                    seed: r.seed,
                });
            }
            by_config
                .entry((r.arch.clone(), r.config_id.clone()))
                .or_default()
                .push(i);
        }
        let mut groups = Vec::with_capacity(by_config.len());
        for ((arch, config_id), mut runs) in by_config {
            runs.sort_by_key(|&i| records[i].seed);
            let first = &records[runs[0]];
            if let Some(&bad) = runs
                .iter()
                .find(|&&i| records[i].n_params != first.n_params)
            {
                return Err(Error::validation(
                    format!("config {arch}:{config_id}"),
                    format!(
                        "inconsistent n_params across seeds ({} vs {})",
                        first.n_params, records[bad].n_params
                    ),
                ));
            }
            groups.push(ConfigGroup {
                n_params: first.n_params,
                width_param: first.width_param,
                macs: first.macs,
                arch,
                config_id,
                runs,
            });
        }
        groups.sort_by(|a, b| {
            (a.arch.as_str(), a.n_params, a.config_id.as_str()).cmp(&(
                b.arch.as_str(),
                b.n_params,
                b.config_id.as_str(),
            ))
        });
        Ok(Corpus {
            manifest,
            records,
            groups,
        })
    }

    /// Configuration groups ordered by (arch, n_params, config_id).
    pub fn configs(&self) -> &[ConfigGroup] {
        &self.groups
    }

    pub fn config(&self, arch: &str, config_id: &str) -> Option<&ConfigGroup> {
        self.groups
            .iter()
            .find(|g| g.arch == arch && g.config_id == config_id)
    }

    pub fn archs(&self) -> Vec<&str> {
        let mut archs: Vec<&str> = self.groups.iter().map(|g| g.arch.as_str()).collect();
        archs.dedup();
        archs
    }

    pub fn runs<'a>(&'a self, group: &'a ConfigGroup) -> impl Iterator<Item = &'a RunRecord> + 'a {
        group.runs.iter().map(move |&i| &self.records[i])
    }

    /// Write the manifest as JSON and the records as JSON Lines.
    pub fn write(&self, manifest_path: &Path, records_path: &Path) -> Result<()> {
        self.manifest.write(manifest_path)?;
        write_records(records_path, &self.records)
    }
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Read records from one JSON Lines file. Blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let file = fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn record_files(records_path: &Path) -> Result<Vec<PathBuf>> {
    if !records_path.is_dir() {
        return Ok(vec![records_path.to_path_buf()]);
    }
    let entries = fs::read_dir(records_path).map_err(|source| Error::Io {
        path: records_path.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// Load a manifest and the records from a `.jsonl` file or a directory of them.
pub fn load_corpus(manifest_path: &Path, records_path: &Path) -> Result<Corpus> {
    let manifest = DatasetManifest::from_path(manifest_path)?;
    let mut records = Vec::new();
    for file in record_files(records_path)? {
        records.extend(read_records(&file)?);
    }
    Corpus::new(manifest, records)
}
