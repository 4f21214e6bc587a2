use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Integer codes for an ordered category.
    Ordinal,
    Continuous,
    /// Integer code of the travel mode.
    Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub lo: f64,
    pub hi: f64,
    /// Decimal places kept; 0 for integer-coded features.
    pub precision: u32,
}

impl FeatureSpec {
    pub fn integer(name: &str, kind: FeatureKind, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            kind,
            lo,
            hi,
            precision: 0,
        }
    }

    /// Clamps into the allowed interval and rounds to the feature precision.
    pub fn conform(&self, value: f64) -> f64 {
        round_to(value.clamp(self.lo, self.hi), self.precision)
    }

    pub fn admits(&self, value: f64) -> bool {
        value >= self.lo && value <= self.hi && round_to(value, self.precision) == value
    }
}

pub fn round_to(value: f64, precision: u32) -> f64 {
    let scale = 10f64.powi(precision as i32);
    // +0.0 folds negative zero.
    (value * scale).round() / scale + 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn conform(&self, values: &mut [f64]) {
        for (v, spec) in values.iter_mut().zip(&self.features) {
            *v = spec.conform(*v);
        }
    }

    pub fn check(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                actual: values.len(),
            });
        }
        for (v, spec) in values.iter().zip(&self.features) {
            if !spec.admits(*v) {
                return Err(Error::Schema(format!(
                    "{}={} outside [{}, {}] at precision {}",
                    spec.name, v, spec.lo, spec.hi, spec.precision
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Row index within the dataset.
    pub id: usize,
    pub features: Vec<f64>,
    pub label: usize,
    pub variation_id: usize,
    /// Equation value computed from the stored features, when the dataset has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub schema: FeatureSchema,
    pub class_names: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn schema(&self) -> &FeatureSchema {
        &self.meta.schema
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn class_count(&self) -> usize {
        self.meta.class_names.len()
    }

    pub fn feature_count(&self) -> usize {
        self.meta.schema.len()
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for inst in &self.instances {
            counts[inst.label] += 1;
        }
        counts
    }

    /// Per-feature mean and (population) standard deviation.
    pub fn feature_stats(&self) -> FeatureStats {
        let d = self.feature_count();
        let n = self.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for inst in &self.instances {
            for (m, v) in mean.iter_mut().zip(&inst.features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; d];
        for inst in &self.instances {
            for ((s, v), m) in std.iter_mut().zip(&inst.features).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        FeatureStats { mean, std }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for name in self.schema().names() {
            out.push_str(name);
            out.push(',');
        }
        out.push_str("label,variation_id\n");
        for inst in &self.instances {
            for (v, spec) in inst.features.iter().zip(&self.schema().features) {
                let _ = write!(out, "{:.*},", spec.precision as usize, v);
            }
            let _ = writeln!(out, "{},{}", inst.label, inst.variation_id);
        }
        out
    }

    /// Short digest of the CSV serialization; identifies the dataset in
    /// downstream artifacts.
    pub fn content_hash(&self) -> String {
        short_hash(self.to_csv().as_bytes())
    }

    /// Writes `path` and the schema sidecar `path.meta.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.meta)? + "\n";
        write_atomic(path, self.to_csv().as_bytes())?;
        write_atomic(&meta_path(path), json.as_bytes())
    }

    /// Loads a dataset CSV. Without a sidecar the schema is inferred from the
    /// observed values.
    pub fn load(path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta_path = meta_path(path);
        let meta: Option<DatasetMeta> = if meta_path.exists() {
            let raw = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            Some(serde_json::from_str(&raw).map_err(|e| Error::Parse {
                path: meta_path.clone(),
                message: e.to_string(),
            })?)
        } else {
            None
        };
        parse_csv(path, &text, meta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

fn parse_csv(path: &Path, text: &str, meta: Option<DatasetMeta>) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 3 || columns[columns.len() - 2..] != ["label", "variation_id"] {
        return Err(parse_err(1, "header must end with label,variation_id".into()));
    }
    let names: Vec<&str> = columns[..columns.len() - 2].to_vec();
    let d = names.len();

    let mut instances = Vec::new();
    let mut decimals = vec![0u32; d];
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(parse_err(
                i + 1,
                format!("expected {} fields, found {}", d + 2, fields.len()),
            ));
        }
        let mut features = Vec::with_capacity(d);
        for (j, f) in fields[..d].iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(i + 1, format!("bad number {f:?}")))?;
            if let Some(dot) = f.find('.') {
                decimals[j] = decimals[j].max((f.trim().len() - dot - 1) as u32);
            }
            features.push(v);
        }
        let label: usize = fields[d]
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad label {:?}", fields[d])))?;
        let variation_id: usize = fields[d + 1]
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad variation id {:?}", fields[d + 1])))?;
        instances.push(Instance {
            id: instances.len(),
            features,
            label,
            variation_id,
            energy: None,
        });
    }

    let meta = match meta {
        Some(meta) => {
            if meta.schema.names() != names {
                return Err(parse_err(1, "header does not match schema sidecar".into()));
            }
            meta
        }
        None => {
            let features = (0..d)
                .map(|j| {
                    let (lo, hi) = instances.iter().fold(
                        (f64::INFINITY, f64::NEG_INFINITY),
                        |(lo, hi), inst| (lo.min(inst.features[j]), hi.max(inst.features[j])),
                    );
                    FeatureSpec {
                        name: names[j].to_string(),
                        kind: if decimals[j] == 0 {
                            FeatureKind::Ordinal
                        } else {
                            FeatureKind::Continuous
                        },
                        lo,
                        hi,
                        precision: decimals[j],
                    }
                })
                .collect();
            let classes = instances.iter().map(|i| i.label + 1).max().unwrap_or(0);
            DatasetMeta {
                name: path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                schema: FeatureSchema { features },
                class_names: (0..classes).map(|c| format!("class_{c}")).collect(),
                config_hash: String::new(),
                seed: 0,
            }
        }
    };
    if let Some(bad) = instances.iter().find(|i| i.label >= meta.class_names.len()) {
        return Err(parse_err(
            bad.id + 2,
            format!("label {} exceeds class count {}", bad.label, meta.class_names.len()),
        ));
    }
    Ok(Dataset { meta, instances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conform_clamps_and_rounds() {
        let spec = FeatureSpec {
            name: "a".into(),
            kind: FeatureKind::Continuous,
            lo: 0.0,
            hi: 10.0,
            precision: 3,
        };
        assert_eq!(spec.conform(7.65432), 7.654);
        assert_eq!(spec.conform(-4.0), 0.0);
        assert_eq!(spec.conform(11.0), 10.0);
        assert!(spec.admits(7.654));
        assert!(!spec.admits(7.6543));
    }

    #[test]
    fn round_folds_negative_zero() {
        assert!(round_to(-0.0001, 3).is_sign_positive());
    }
}
