//! Runs x instances x features coefficient tensors and their CSV format.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Explainer,
    Gte,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Source::Explainer => "explainer",
            Source::Gte => "gte",
        }
    }
}

/// A slot that could not be computed; its coefficients are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotFailure {
    pub run: usize,
    pub instance_id: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub source: Source,
    #[serde(default)]
    pub dataset: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub seed: u64,
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub failures: Vec<SlotFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub meta: MatrixMeta,
    pub runs: usize,
    pub instance_ids: Vec<usize>,
    /// Flat `runs x instances x features`.
    coefficients: Vec<f64>,
    /// Flat `runs x instances`.
    intercepts: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn new(meta: MatrixMeta, runs: usize, instance_ids: Vec<usize>) -> Self {
        let d = meta.feature_names.len();
        let n = instance_ids.len();
        Self {
            meta,
            runs,
            instance_ids,
            coefficients: vec![f64::NAN; runs * n * d],
            intercepts: vec![f64::NAN; runs * n],
        }
    }

    pub fn features(&self) -> usize {
        self.meta.feature_names.len()
    }

    pub fn instances(&self) -> usize {
        self.instance_ids.len()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.runs, self.instances(), self.features())
    }

    pub fn coefficients(&self, run: usize, slot: usize) -> &[f64] {
        let d = self.features();
        let at = (run * self.instances() + slot) * d;
        &self.coefficients[at..at + d]
    }

    pub fn intercept(&self, run: usize, slot: usize) -> f64 {
        self.intercepts[run * self.instances() + slot]
    }

    pub fn set(&mut self, run: usize, slot: usize, coefficients: &[f64], intercept: f64) {
        let d = self.features();
        assert_eq!(coefficients.len(), d, "coefficient length");
        let cell = run * self.instances() + slot;
        self.coefficients[cell * d..(cell + 1) * d].copy_from_slice(coefficients);
        self.intercepts[cell] = intercept;
    }

    pub fn is_complete(&self) -> bool {
        self.coefficients.iter().all(|v| v.is_finite()) && self.intercepts.iter().all(|v| v.is_finite())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("run,instance_id,intercept");
        for j in 1..=self.features() {
            let _ = write!(out, ",coef_{j}");
        }
        out.push('\n');
        for run in 0..self.runs {
            for (slot, id) in self.instance_ids.iter().enumerate() {
                let _ = write!(out, "{run},{id},{}", self.intercept(run, slot));
                for c in self.coefficients(run, slot) {
                    let _ = write!(out, ",{c}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        s.into()
    }

    /// Writes the CSV and its metadata sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.meta)? + "\n";
        crate::model::write_atomic(path, self.to_csv().as_bytes())?;
        crate::model::write_atomic(&Self::meta_path(path), json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<CoefficientMatrix> {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        let meta_path = Self::meta_path(path);
        let raw = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: MatrixMeta = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: meta_path.clone(),
            message: e.to_string(),
        })?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d = meta.feature_names.len();

        let mut rows: Vec<(usize, usize, f64, Vec<f64>)> = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 3 {
                return Err(parse_err(format!(
                    "line {}: expected {} fields, found {}",
                    i + 1,
                    d + 3,
                    fields.len()
                )));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("line {}: bad number {s:?}", i + 1)))
            };
            let int = |s: &str| -> Result<usize> {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(format!("line {}: bad integer {s:?}", i + 1)))
            };
            let coefs = fields[3..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            rows.push((int(fields[0])?, int(fields[1])?, num(fields[2])?, coefs));
        }
        let runs = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let ids: Vec<usize> = rows.iter().take_while(|r| r.0 == 0).map(|r| r.1).collect();
        if rows.len() != runs * ids.len() {
            return Err(parse_err(format!(
                "{} rows do not form {runs} runs of {} instances",
                rows.len(),
                ids.len()
            )));
        }
        let mut m = CoefficientMatrix::new(meta, runs, ids);
        for (k, (run, id, intercept, coefs)) in rows.into_iter().enumerate() {
            let slot = k % m.instances();
            if run != k / m.instances() || id != m.instance_ids[slot] {
                return Err(parse_err(format!("row {} out of run/instance order", k + 2)));
            }
            m.set(run, slot, &coefs, intercept);
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(d: usize) -> MatrixMeta {
        MatrixMeta {
            source: Source::Gte,
            config_hash: "abc".into(),
            dataset: "toy".into(),
            dataset_hash: "def".into(),
            seed: 3,
            feature_names: (0..d).map(|j| format!("x{j}")).collect(),
            failures: vec![],
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            runs in 1usize..4,
            n in 1usize..5,
            d in 1usize..4,
            values in proptest::collection::vec(-1e6f64..1e6, 64),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.csv");
            let mut m = CoefficientMatrix::new(meta(d), runs, (0..n).map(|i| i * 7).collect());
            let mut k = 0;
            for r in 0..runs {
                for s in 0..n {
                    let c: Vec<f64> = (0..d).map(|j| values[(k + j) % 64] / 3.0).collect();
                    m.set(r, s, &c, values[k % 64]);
                    k += 1;
                }
            }
            m.save(&path).unwrap();
            let back = CoefficientMatrix::load(&path).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
