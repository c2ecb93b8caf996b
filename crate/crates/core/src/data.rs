//! Feature files, per-encoding preprocessing, synthetic datasets and splits.
//!
//! The file format is UTF-8 CSV with header `label,f0,f1,...,f{D-1}` and one
//! record per line; labels are `0` or `1`.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::{EncodingKind, EncodingSpec};
use crate::error::{Error, Result};

/// Upper end of the angle range is `π − ANGLE_MARGIN`.
pub const ANGLE_MARGIN: f64 = 1e-6;

/// Per-dimension offset shared by both synthetic classes.
pub const SYNTH_OFFSET: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub label: u8,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub n_records: usize,
    pub feature_dim: usize,
    pub class_counts: [usize; 2],
    pub source: String,
    /// Hex SHA-256 of the file bytes.
    pub checksum: String,
}

impl DatasetManifest {
    fn new(records: &[FeatureRecord], feature_dim: usize, source: String, checksum: String) -> Self {
        let ones = records.iter().filter(|r| r.label == 1).count();
        Self {
            n_records: records.len(),
            feature_dim,
            class_counts: [records.len() - ones, ones],
            source,
            checksum,
        }
    }
}

pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Parses feature CSV text. `source` only labels the manifest.
pub fn parse_features(text: &str, source: &str) -> Result<(Vec<FeatureRecord>, DatasetManifest)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_error(1, e.to_string()))?.clone();
    if header.get(0) != Some("label") {
        return Err(Error::Schema("first column must be `label`".into()));
    }
    for (i, name) in header.iter().enumerate().skip(1) {
        if name != format!("f{}", i - 1) {
            return Err(Error::Schema(format!("column {i} is `{name}`, expected `f{}`", i - 1)));
        }
    }
    let dim = header.len() - 1;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != dim + 1 {
            return Err(Error::Schema(format!("line {line}: {} features, expected {dim}", row.len() - 1)));
        }
        let label = match &row[0] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_error(line, format!("label `{other}` is not 0 or 1"))),
        };
        let features = row
            .iter()
            .skip(1)
            .map(|f| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_error(line, format!("`{f}` is not a finite number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(FeatureRecord { label, features });
    }
    let manifest = DatasetManifest::new(&records, dim, source.to_string(), checksum(text.as_bytes()));
    Ok((records, manifest))
}

pub fn load_features(path: &Path) -> Result<(Vec<FeatureRecord>, DatasetManifest)> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| parse_error(0, format!("not UTF-8: {e}")))?;
    parse_features(&text, &path.display().to_string())
}

/// CSV text for `records`. Values use the shortest round-tripping form.
pub fn format_features(records: &[FeatureRecord]) -> Result<String> {
    let dim = check_uniform(records)?;
    let mut out = String::from("label");
    for i in 0..dim {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for r in records {
        out.push_str(&r.label.to_string());
        for v in &r.features {
            out.push(',');
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes the CSV and returns its manifest.
pub fn write_features(records: &[FeatureRecord], path: &Path) -> Result<DatasetManifest> {
    let text = format_features(records)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    let dim = records.first().map_or(0, |r| r.features.len());
    Ok(DatasetManifest::new(records, dim, path.display().to_string(), checksum(text.as_bytes())))
}

fn check_uniform(records: &[FeatureRecord]) -> Result<usize> {
    let dim = records.first().map_or(0, |r| r.features.len());
    for (i, r) in records.iter().enumerate() {
        if r.features.len() != dim {
            return Err(Error::Schema(format!("record {i} has {} features, expected {dim}", r.features.len())));
        }
        if r.label > 1 {
            return Err(Error::invalid(format!("record {i} has label {}", r.label)));
        }
        if r.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("record {i} has a non-finite feature")));
        }
    }
    Ok(dim)
}

/// Encoding-specific rescaling, fit on one split and applied to any other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Preprocessor {
    /// L2-normalize and zero-pad to `width`.
    Amplitude { width: usize },
    /// Per-dimension min-max onto `[0, π − ANGLE_MARGIN]`, clamped.
    MinMax { min: Vec<f64>, max: Vec<f64> },
}

impl Preprocessor {
    pub fn fit(records: &[FeatureRecord], encoding: &EncodingSpec) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("cannot fit preprocessing on an empty set"));
        }
        let dim = check_uniform(records)?;
        if !encoding.accepts_dim(dim) {
            return Err(Error::invalid(format!(
                "{} encoding on {} qubits cannot take {dim} features",
                encoding.kind, encoding.n_qubits
            )));
        }
        Ok(match encoding.kind {
            EncodingKind::Amplitude => Preprocessor::Amplitude { width: encoding.max_features() },
            EncodingKind::Angle | EncodingKind::DenseAngle => {
                let mut min = vec![f64::INFINITY; dim];
                let mut max = vec![f64::NEG_INFINITY; dim];
                for r in records {
                    for (j, &v) in r.features.iter().enumerate() {
                        min[j] = min[j].min(v);
                        max[j] = max[j].max(v);
                    }
                }
                Preprocessor::MinMax { min, max }
            }
        })
    }

    pub fn apply(&self, records: &[FeatureRecord]) -> Result<Vec<FeatureRecord>> {
        check_uniform(records)?;
        records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let features = match self {
                    Preprocessor::Amplitude { width } => {
                        let norm = r.features.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm == 0.0 {
                            return Err(Error::invalid(format!("record {i} has zero norm")));
                        }
                        if r.features.len() > *width {
                            return Err(Error::invalid(format!("record {i} exceeds {width} features")));
                        }
                        let mut v: Vec<f64> = r.features.iter().map(|x| x / norm).collect();
                        v.resize(*width, 0.0);
                        v
                    }
                    Preprocessor::MinMax { min, max } => {
                        if r.features.len() != min.len() {
                            return Err(Error::Schema(format!("record {i} has {} features", r.features.len())));
                        }
                        let top = std::f64::consts::PI - ANGLE_MARGIN;
                        r.features
                            .iter()
                            .zip(min.iter().zip(max))
                            .map(|(&x, (&lo, &hi))| {
                                if hi > lo {
                                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0) * top
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    }
                };
                Ok(FeatureRecord { label: r.label, features })
            })
            .collect()
    }
}

/// Fits on `records` and applies to them.
pub fn preprocess(records: &[FeatureRecord], encoding: &EncodingSpec) -> Result<Vec<FeatureRecord>> {
    Preprocessor::fit(records, encoding)?.apply(records)
}

/// Two isotropic unit-variance Gaussian classes in `dim` dimensions whose means
/// sit `separation` apart.
///
/// Both means carry the offset [`SYNTH_OFFSET`] on coordinates `0` and
/// `dim / 2` and differ along `(e_0 − e_{dim/2}) / √2`, so class 1 is pushed
/// towards coordinate 0 and class 0 towards coordinate `dim / 2`. All other
/// coordinates are pure noise. The offset keeps the classes apart after L2
/// normalization, which would otherwise map `x` and `−x` to the same quantum
/// state. Records alternate class 0, class 1.
pub fn synthesize_gaussians(dim: usize, n_per_class: usize, separation: f64, seed: u64) -> Result<Vec<FeatureRecord>> {
    if dim < 2 || n_per_class < 1 {
        return Err(Error::invalid("synthetic data needs dim >= 2 and at least one record per class"));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::invalid(format!("separation {separation} must be finite and non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (0, dim / 2);
    let half = separation / 2.0 / std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(2 * n_per_class);
    for _ in 0..n_per_class {
        for label in [0u8, 1] {
            let sign = if label == 1 { 1.0 } else { -1.0 };
            let features = (0..dim)
                .map(|j| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let mean = match j {
                        j if j == a => SYNTH_OFFSET + sign * half,
                        j if j == b => SYNTH_OFFSET - sign * half,
                        _ => 0.0,
                    };
                    mean + noise
                })
                .collect();
            out.push(FeatureRecord { label, features });
        }
    }
    Ok(out)
}

/// Stratified seeded split; each class contributes `round(n_c · fraction)`
/// records (at least one to each side) to the training set.
pub fn split(records: &[FeatureRecord], train_fraction: f64, seed: u64) -> Result<(Vec<FeatureRecord>, Vec<FeatureRecord>)> {
    let (train_idx, test_idx) = split_indices(records, train_fraction, seed)?;
    Ok((
        train_idx.iter().map(|&i| records[i].clone()).collect(),
        test_idx.iter().map(|&i| records[i].clone()).collect(),
    ))
}

/// Index form of [`split`]; both lists are ascending.
pub fn split_indices(records: &[FeatureRecord], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [0u8, 1] {
        let mut idx: Vec<usize> = (0..records.len()).filter(|&i| records[i].label == label).collect();
        if idx.len() < 2 {
            return Err(Error::invalid(format!("class {label} has {} records; need at least 2", idx.len())));
        }
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64 * train_fraction).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
