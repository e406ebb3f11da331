//! Dataset ingestion, feature schemas, imputation, splits, seed selection and
//! synthetic tree-labelled fixtures.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{DecisionTree, TreeNode, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Integer,
    Categorical,
}

/// Metadata for a single feature: kind, bounds, category codes and the
/// imputation value computed from training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub lower: f64,
    pub upper: f64,
    pub categories: Vec<String>,
    /// Mean of the training values (modal category index for categoricals).
    pub mean: Option<f64>,
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FeatureKind::Continuous | FeatureKind::Integer => {
                if !(self.lower < self.upper) {
                    return Err(Error::Schema(format!(
                        "feature '{}': lower ({}) must be < upper ({})",
                        self.name, self.lower, self.upper
                    )));
                }
                if let Some(m) = self.mean {
                    if m < self.lower || m > self.upper {
                        return Err(Error::Schema(format!(
                            "feature '{}': mean {} outside bounds [{}, {}]",
                            self.name, m, self.lower, self.upper
                        )));
                    }
                }
            }
            FeatureKind::Categorical => {
                if self.categories.is_empty() {
                    return Err(Error::Schema(format!(
                        "categorical feature '{}' has no categories",
                        self.name
                    )));
                }
                let mut seen = std::collections::HashSet::new();
                for c in &self.categories {
                    if !seen.insert(c) {
                        return Err(Error::Schema(format!(
                            "categorical feature '{}' has duplicate category '{}'",
                            self.name, c
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Inclusive value bounds as stored in a sample vector. For categoricals
    /// these are indices into `categories`.
    pub fn value_bounds(&self) -> (f64, f64) {
        match self.kind {
            FeatureKind::Categorical => (0.0, (self.categories.len() - 1) as f64),
            _ => (self.lower, self.upper),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        let (lo, hi) = self.value_bounds();
        if !value.is_finite() {
            return false;
        }
        if self.kind == FeatureKind::Categorical && value.fract() != 0.0 {
            return false;
        }
        value >= lo && value <= hi
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: Vec<FeatureSpec>,
    pub label_names: Vec<String>,
}

impl DatasetSchema {
    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn class_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_names.len() < 2 {
            return Err(Error::Schema("need at least 2 class names".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.label_names {
            if !seen.insert(l) {
                return Err(Error::Schema(format!("duplicate class name '{l}'")));
            }
        }
        for f in &self.features {
            f.validate()?;
        }
        Ok(())
    }

    pub fn validate_sample(&self, sample: &Sample) -> Result<()> {
        if sample.values.len() != self.feature_count() {
            return Err(Error::Validation(format!(
                "expected {} feature values, got {}",
                self.feature_count(),
                sample.values.len()
            )));
        }
        for (i, (&v, spec)) in sample.values.iter().zip(&self.features).enumerate() {
            if !spec.contains(v) {
                return Err(Error::Validation(format!(
                    "feature '{}' (index {i}): value {v} outside declared range",
                    spec.name
                )));
            }
        }
        Ok(())
    }
}

/// Sentinel marking a missing position in a partially specified sample.
pub const MISSING: f64 = f64::NAN;

/// A concrete feature vector. Categorical features are stored as the index
/// of their category code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Self {
        Sample { values }
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| !v.is_nan())
    }

    /// Hashable identity, with floats rounded to 9 decimal places so that
    /// epsilon-noise near-duplicates collapse to one frontier entry.
    pub fn key(&self) -> SampleKey {
        SampleKey(
            self.values
                .iter()
                .map(|v| (v * 1e9).round() as i64)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleKey(Vec<i64>);

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub sample: Sample,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputeMode {
    Mean,
    Random,
}

/// On-disk schema document. Field names are part of the external interface.
#[derive(Debug, Serialize, Deserialize)]
struct SchemaFile {
    label_column: String,
    classes: Vec<String>,
    features: Vec<SchemaFileFeature>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemaFileFeature {
    name: String,
    kind: FeatureKind,
    #[serde(default)]
    lower: Option<f64>,
    #[serde(default)]
    upper: Option<f64>,
    #[serde(default)]
    categories: Vec<String>,
}

/// Loads a CSV dataset under an explicit JSON schema. Means are computed
/// from the loaded rows; every value is checked against its declared bounds.
pub fn load_dataset(
    csv_path: impl AsRef<Path>,
    schema_path: impl AsRef<Path>,
) -> Result<(DatasetSchema, Vec<LabeledSample>)> {
    let doc: SchemaFile = serde_json::from_str(&std::fs::read_to_string(schema_path)?)?;
    let mut schema = DatasetSchema {
        features: doc
            .features
            .iter()
            .map(|f| FeatureSpec {
                name: f.name.clone(),
                kind: f.kind,
                lower: f.lower.unwrap_or(0.0),
                upper: f.upper.unwrap_or(0.0),
                categories: f.categories.clone(),
                mean: None,
            })
            .collect(),
        label_names: doc.classes.clone(),
    };
    schema.validate()?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path.as_ref())?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read CSV header: {e}")))?
        .clone();
    let col_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in CSV header")))
    };
    let label_col = col_of(&doc.label_column)?;
    let feature_cols: Vec<usize> = schema
        .features
        .iter()
        .map(|f| col_of(&f.name))
        .collect::<Result<_>>()?;

    let mut samples = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Parse {
            row,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        let mut values = Vec::with_capacity(schema.feature_count());
        for (spec, &col) in schema.features.iter().zip(&feature_cols) {
            let cell = record.get(col).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::Parse {
                    row,
                    column: spec.name.clone(),
                    message: "missing value (empty cell) in training data".into(),
                });
            }
            let value = match spec.kind {
                FeatureKind::Categorical => {
                    spec.categories
                        .iter()
                        .position(|c| c == cell)
                        .ok_or_else(|| Error::Parse {
                            row,
                            column: spec.name.clone(),
                            message: format!("unknown category '{cell}'"),
                        })? as f64
                }
                _ => cell.parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    column: spec.name.clone(),
                    message: e.to_string(),
                })?,
            };
            if !spec.contains(value) {
                return Err(Error::Validation(format!(
                    "row {row}, feature '{}': value {value} outside bounds",
                    spec.name
                )));
            }
            values.push(value);
        }
        let label_cell = record.get(label_col).unwrap_or("");
        let label = schema
            .label_names
            .iter()
            .position(|l| l == label_cell)
            .ok_or_else(|| Error::Schema(format!("row {row}: unknown label '{label_cell}'")))?;
        samples.push(LabeledSample {
            sample: Sample::new(values),
            label,
        });
    }

    compute_means(&mut schema, &samples);
    Ok((schema, samples))
}

fn compute_means(schema: &mut DatasetSchema, samples: &[LabeledSample]) {
    for (i, spec) in schema.features.iter_mut().enumerate() {
        if samples.is_empty() {
            continue;
        }
        match spec.kind {
            FeatureKind::Categorical => {
                let mut counts: HashMap<i64, usize> = HashMap::new();
                for s in samples {
                    *counts.entry(s.sample.values[i] as i64).or_insert(0) += 1;
                }
                // Modal category; ties go to the lowest index.
                let modal = counts
                    .iter()
                    .max_by_key(|(idx, count)| (**count, -**idx))
                    .map(|(idx, _)| *idx)
                    .unwrap_or(0);
                spec.mean = Some(modal as f64);
            }
            _ => {
                let sum: f64 = samples.iter().map(|s| s.sample.values[i]).sum();
                spec.mean = Some(sum / samples.len() as f64);
            }
        }
    }
}

/// Writes a dataset back to CSV in the schema's column order (round-trip
/// counterpart of [`load_dataset`]).
pub fn save_dataset(
    csv_path: impl AsRef<Path>,
    schema: &DatasetSchema,
    label_column: &str,
    samples: &[LabeledSample],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(csv_path.as_ref())?;
    let mut header: Vec<String> = schema.features.iter().map(|f| f.name.clone()).collect();
    header.push(label_column.to_string());
    writer.write_record(&header)?;
    for s in samples {
        let mut record: Vec<String> = Vec::with_capacity(schema.feature_count() + 1);
        for (spec, &v) in schema.features.iter().zip(&s.sample.values) {
            match spec.kind {
                FeatureKind::Categorical => record.push(spec.categories[v as usize].clone()),
                _ => record.push(format!("{v}")),
            }
        }
        record.push(schema.label_names[s.label].clone());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Loads a label-free CSV of samples (e.g. attacker seed files) under the
/// schema's feature columns.
pub fn load_unlabeled_csv(
    csv_path: impl AsRef<Path>,
    schema: &DatasetSchema,
) -> Result<Vec<Sample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path.as_ref())?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read CSV header: {e}")))?
        .clone();
    let feature_cols: Vec<usize> = schema
        .features
        .iter()
        .map(|f| {
            headers
                .iter()
                .position(|h| h == f.name)
                .ok_or_else(|| Error::Schema(format!("column '{}' not found", f.name)))
        })
        .collect::<Result<_>>()?;
    let mut samples = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        let mut values = Vec::with_capacity(schema.feature_count());
        for (spec, &col) in schema.features.iter().zip(&feature_cols) {
            let cell = record.get(col).unwrap_or("");
            let value = match spec.kind {
                FeatureKind::Categorical => {
                    spec.categories
                        .iter()
                        .position(|c| c == cell)
                        .ok_or_else(|| Error::Parse {
                            row,
                            column: spec.name.clone(),
                            message: format!("unknown category '{cell}'"),
                        })? as f64
                }
                _ => cell.parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    column: spec.name.clone(),
                    message: e.to_string(),
                })?,
            };
            values.push(value);
        }
        let sample = Sample::new(values);
        schema.validate_sample(&sample)?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Writes samples (no labels) to CSV in the schema's column order.
pub fn save_unlabeled_csv(
    csv_path: impl AsRef<Path>,
    schema: &DatasetSchema,
    samples: &[Sample],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(csv_path.as_ref())?;
    let header: Vec<String> = schema.features.iter().map(|f| f.name.clone()).collect();
    writer.write_record(&header)?;
    for s in samples {
        let record: Vec<String> = schema
            .features
            .iter()
            .zip(&s.values)
            .map(|(spec, &v)| match spec.kind {
                FeatureKind::Categorical => spec.categories[v as usize].clone(),
                _ => format!("{v}"),
            })
            .collect();
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Fills sentinel-marked missing positions with the schema mean (clamped and
/// round-half-up for integer kinds, modal category for categoricals) or with
/// a uniform draw from the permitted range.
pub fn impute_missing(
    partial: &Sample,
    schema: &DatasetSchema,
    mode: ImputeMode,
    rng_seed: u64,
) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut values = partial.values.clone();
    for (i, spec) in schema.features.iter().enumerate() {
        if !values[i].is_nan() {
            continue;
        }
        values[i] = match (mode, spec.kind) {
            (ImputeMode::Mean, FeatureKind::Continuous) => {
                let m = spec.mean.ok_or_else(|| {
                    Error::Schema(format!("feature '{}' has no mean for imputation", spec.name))
                })?;
                m.clamp(spec.lower, spec.upper)
            }
            (ImputeMode::Mean, FeatureKind::Integer) => {
                let m = spec.mean.ok_or_else(|| {
                    Error::Schema(format!("feature '{}' has no mean for imputation", spec.name))
                })?;
                round_half_up(m).clamp(spec.lower.ceil(), spec.upper.floor())
            }
            (ImputeMode::Mean, FeatureKind::Categorical) => spec.mean.unwrap_or(0.0),
            (ImputeMode::Random, FeatureKind::Continuous) => {
                rng.random_range(spec.lower..=spec.upper)
            }
            (ImputeMode::Random, FeatureKind::Integer) => {
                rng.random_range(spec.lower.ceil() as i64..=spec.upper.floor() as i64) as f64
            }
            (ImputeMode::Random, FeatureKind::Categorical) => {
                rng.random_range(0..spec.categories.len()) as f64
            }
        };
    }
    Ok(Sample::new(values))
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Deterministic shuffled partition: `floor(n * fraction)` rows for training,
/// the remainder for testing.
pub fn split(
    data: &[LabeledSample],
    train_fraction: f64,
    rng_seed: u64,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>)> {
    if data.is_empty() {
        return Err(Error::Argument("split on empty dataset".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    indices.shuffle(&mut rng);
    let n_train = ((data.len() as f64) * train_fraction).floor() as usize;
    let train = indices[..n_train].iter().map(|&i| data[i].clone()).collect();
    let test = indices[n_train..].iter().map(|&i| data[i].clone()).collect();
    Ok((train, test))
}

/// Uniform without-replacement draw of up to `per_class` samples per class,
/// labels stripped (the attacker re-queries the target for them). Classes
/// with too few samples yield fewer seeds and a warning record.
pub fn sample_seeds(
    data: &[LabeledSample],
    schema: &DatasetSchema,
    per_class: usize,
    rng_seed: u64,
) -> (Vec<Sample>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seeds = Vec::new();
    let mut warnings = Vec::new();
    if per_class == 0 {
        return (seeds, warnings);
    }
    for class in 0..schema.class_count() {
        let mut members: Vec<&LabeledSample> =
            data.iter().filter(|s| s.label == class).collect();
        if members.len() < per_class {
            warnings.push(format!(
                "class '{}' has only {} samples (requested {per_class})",
                schema.label_names[class],
                members.len()
            ));
        }
        members.shuffle(&mut rng);
        for m in members.into_iter().take(per_class) {
            seeds.push(m.sample.clone());
        }
    }
    (seeds, warnings)
}

/// Builds a random axis-aligned tree over integer features in
/// `[0, domain_size)` and enumerates the full input domain labelled by it.
/// Ground-truth fixture for exact-recovery tests.
pub fn synth_tree_dataset(
    depth: usize,
    feature_count: usize,
    domain_size: usize,
    rng_seed: u64,
) -> Result<(DecisionTree, DatasetSchema, Vec<LabeledSample>)> {
    if depth < 1 {
        return Err(Error::Argument("depth must be >= 1".into()));
    }
    if feature_count < 1 {
        return Err(Error::Argument("feature_count must be >= 1".into()));
    }
    if domain_size < 2 {
        return Err(Error::Argument("domain_size must be >= 2".into()));
    }
    let total = (domain_size as f64).powi(feature_count as i32);
    if total > 1e6 {
        return Err(Error::Capacity(format!(
            "domain of {total} points exceeds the 10^6 enumeration cap"
        )));
    }

    let n_classes = 2;
    let schema = DatasetSchema {
        features: (0..feature_count)
            .map(|i| FeatureSpec {
                name: format!("f{i}"),
                kind: FeatureKind::Integer,
                lower: 0.0,
                upper: (domain_size - 1) as f64,
                categories: vec![],
                mean: None,
            })
            .collect(),
        label_names: vec!["c0".into(), "c1".into()],
    };

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    fn build(
        rng: &mut ChaCha8Rng,
        level: usize,
        depth: usize,
        feature_count: usize,
        domain_size: usize,
        n_classes: usize,
    ) -> TreeNode {
        if level == depth {
            let class = rng.random_range(0..n_classes);
            let mut counts = vec![0u64; n_classes];
            counts[class] = 1;
            return TreeNode::Leaf { counts };
        }
        // Threshold t means "x <= t goes left"; both sides stay non-empty.
        let feature = rng.random_range(0..feature_count);
        let threshold = rng.random_range(0..domain_size - 1) as f64;
        TreeNode::Internal {
            feature,
            threshold,
            left: Box::new(build(rng, level + 1, depth, feature_count, domain_size, n_classes)),
            right: Box::new(build(rng, level + 1, depth, feature_count, domain_size, n_classes)),
        }
    }
    let root = build(&mut rng, 0, depth, feature_count, domain_size, n_classes);
    let tree = DecisionTree {
        root,
        params: TreeParams {
            max_depth: depth,
            min_samples_split: 2,
            rng_seed,
        },
        schema_ref: format!("synth-d{depth}-f{feature_count}-m{domain_size}-s{rng_seed}"),
        n_classes,
    };

    let mut samples = Vec::with_capacity(total as usize);
    let mut point = vec![0usize; feature_count];
    'enumerate: loop {
        let sample = Sample::new(point.iter().map(|&v| v as f64).collect());
        let label = tree.predict(&sample);
        samples.push(LabeledSample { sample, label });
        // mixed-radix increment
        let mut i = 0;
        loop {
            if i == feature_count {
                break 'enumerate;
            }
            point[i] += 1;
            if point[i] < domain_size {
                break;
            }
            point[i] = 0;
            i += 1;
        }
    }
    let mut schema = schema;
    compute_means(&mut schema, &samples);
    Ok((tree, schema, samples))
}
