//! Scores explainer coefficients against ground-truth coefficients.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientMatrix;
use crate::error::{Error, Result};
use crate::numerics::{minmax_normalize, paired_t_test, TTestResult};

/// Invariance is rejected at or below this p-value.
pub const INVARIANCE_P_THRESHOLD: f64 = 0.1;

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Min-max normalizes the whole tensor, then takes the complement.
pub fn c_of_ed(distances: &[f64]) -> Vec<f64> {
    minmax_normalize(distances).into_iter().map(|v| 1.0 - v).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RankBy {
    #[default]
    Absolute,
    Signed,
}

/// Feature indices, most important first. Ties keep ascending index order.
pub fn rank_features(coeffs: &[f64], rank_by: RankBy) -> Result<Vec<usize>> {
    if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidCoefficient { index, value });
    }
    let key = |v: f64| match rank_by {
        RankBy::Absolute => v.abs(),
        RankBy::Signed => v,
    };
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| key(coeffs[b]).total_cmp(&key(coeffs[a])));
    Ok(order)
}

fn is_permutation(rank: &[usize]) -> bool {
    let mut seen = vec![false; rank.len()];
    rank.iter().all(|&i| i < seen.len() && !std::mem::replace(&mut seen[i], true))
}

/// `(second_correct, all_correct)` as 0/1 flags.
pub fn order_correct(gte_rank: &[usize], exp_rank: &[usize]) -> Result<(u8, u8)> {
    if gte_rank.len() != exp_rank.len() {
        return Err(Error::Dimension {
            expected: gte_rank.len(),
            actual: exp_rank.len(),
        });
    }
    if !is_permutation(gte_rank) || !is_permutation(exp_rank) {
        return Err(Error::Config("feature rankings must be permutations".into()));
    }
    let second = match (gte_rank.get(1), exp_rank.get(1)) {
        (Some(a), Some(b)) => a == b,
        _ => gte_rank == exp_rank,
    };
    Ok((u8::from(second), u8::from(gte_rank == exp_rank)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceTest {
    pub test: TTestResult,
    pub not_rejected: bool,
}

pub fn implementation_invariance(ed_a: &[f64], ed_b: &[f64]) -> Result<InvarianceTest> {
    let test = paired_t_test(ed_a, ed_b)?;
    let not_rejected = test.p_value > INVARIANCE_P_THRESHOLD;
    Ok(InvarianceTest { test, not_rejected })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroCensus {
    pub tolerance: f64,
    pub total: usize,
    pub counts: Vec<usize>,
    pub rates: Vec<f64>,
}

pub fn zero_census(matrix: &CoefficientMatrix, tolerance: f64) -> ZeroCensus {
    let (runs, n, d) = matrix.shape();
    let mut counts = vec![0; d];
    for run in 0..runs {
        for slot in 0..n {
            for (c, v) in counts.iter_mut().zip(matrix.coefficients(run, slot)) {
                if v.abs() <= tolerance {
                    *c += 1;
                }
            }
        }
    }
    let total = runs * n;
    let rates = counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    ZeroCensus {
        tolerance,
        total,
        counts,
        rates,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub instance_id: usize,
    pub ed: MeanStd,
    pub normalized_ed: MeanStd,
    pub c_of_ed: MeanStd,
    pub second_correct: MeanStd,
    pub all_correct: MeanStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub ed: f64,
    pub c_of_ed: f64,
    pub second_correct: f64,
    pub all_correct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub rank_by: RankBy,
    pub zero_tolerance: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            rank_by: RankBy::Absolute,
            zero_tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub dataset_hash: String,
    pub explainer_config_hash: String,
    pub gte_config_hash: String,
    pub runs: usize,
    pub features: Vec<String>,
    pub options: EvalOptions,
    pub instances: Vec<InstanceScore>,
    pub averages: Averages,
    pub invariance: Option<InvarianceTest>,
    pub explainer_zeros: ZeroCensus,
    pub gte_zeros: ZeroCensus,
}

fn check_compatible(left: &CoefficientMatrix, right: &CoefficientMatrix) -> Result<()> {
    let incompatible = |detail: String| Error::Incompatible {
        detail,
        left: left.meta.dataset_hash.clone(),
        right: right.meta.dataset_hash.clone(),
    };
    if left.shape() != right.shape() {
        return Err(incompatible(format!(
            "shape {:?} vs {:?} (runs, instances, features)",
            left.shape(),
            right.shape()
        )));
    }
    if left.meta.dataset_hash != right.meta.dataset_hash {
        return Err(incompatible("dataset hashes differ".into()));
    }
    if left.instance_ids != right.instance_ids {
        return Err(incompatible("instance ids differ".into()));
    }
    Ok(())
}

struct Slot {
    ed: Vec<f64>,
    second: Vec<f64>,
    all: Vec<f64>,
}

fn score_slots(exp: &CoefficientMatrix, gte: &CoefficientMatrix, rank_by: RankBy) -> Result<Vec<Slot>> {
    (0..exp.instances())
        .into_par_iter()
        .map(|slot| {
            let mut s = Slot {
                ed: Vec::with_capacity(exp.runs),
                second: Vec::with_capacity(exp.runs),
                all: Vec::with_capacity(exp.runs),
            };
            for run in 0..exp.runs {
                let e = exp.coefficients(run, slot);
                let g = gte.coefficients(run, slot);
                let (second, all) = order_correct(&rank_features(g, rank_by)?, &rank_features(e, rank_by)?)?;
                s.ed.push(euclidean(e, g)?);
                s.second.push(f64::from(second));
                s.all.push(f64::from(all));
            }
            Ok(s)
        })
        .collect()
}

/// Scores `exp` against `gte`; with `second`, also tests implementation
/// invariance between the two explainer matrices.
pub fn build_report(
    dataset: &str,
    exp: &CoefficientMatrix,
    gte: &CoefficientMatrix,
    second: Option<&CoefficientMatrix>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    check_compatible(exp, gte)?;
    if exp.instances() == 0 || exp.runs == 0 {
        return Err(Error::Config("nothing to evaluate: empty coefficient matrix".into()));
    }
    let slots = score_slots(exp, gte, options.rank_by)?;
    let runs = exp.runs;

    // One normalization over the whole runs x instances tensor.
    let flat: Vec<f64> = slots.iter().flat_map(|s| s.ed.iter().copied()).collect();
    let normalized = minmax_normalize(&flat);

    let instances: Vec<InstanceScore> = slots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let norm = &normalized[i * runs..(i + 1) * runs];
            let comp: Vec<f64> = norm.iter().map(|v| 1.0 - v).collect();
            InstanceScore {
                instance_id: exp.instance_ids[i],
                ed: MeanStd::of(&s.ed),
                normalized_ed: MeanStd::of(norm),
                c_of_ed: MeanStd::of(&comp),
                second_correct: MeanStd::of(&s.second),
                all_correct: MeanStd::of(&s.all),
            }
        })
        .collect();

    let n = instances.len() as f64;
    let avg = |f: fn(&InstanceScore) -> f64| instances.iter().map(f).sum::<f64>() / n;
    let averages = Averages {
        ed: avg(|s| s.ed.mean),
        c_of_ed: avg(|s| s.c_of_ed.mean),
        second_correct: avg(|s| s.second_correct.mean),
        all_correct: avg(|s| s.all_correct.mean),
    };

    let invariance = match second {
        Some(other) => {
            check_compatible(other, gte)?;
            let other_slots = score_slots(other, gte, options.rank_by)?;
            let a: Vec<f64> = slots.iter().map(|s| MeanStd::of(&s.ed).mean).collect();
            let b: Vec<f64> = other_slots.iter().map(|s| MeanStd::of(&s.ed).mean).collect();
            Some(implementation_invariance(&a, &b)?)
        }
        None => None,
    };

    Ok(EvalReport {
        dataset: dataset.to_string(),
        dataset_hash: exp.meta.dataset_hash.clone(),
        explainer_config_hash: exp.meta.config_hash.clone(),
        gte_config_hash: gte.meta.config_hash.clone(),
        runs,
        features: exp.meta.feature_names.clone(),
        options: options.clone(),
        instances,
        averages,
        invariance,
        explainer_zeros: zero_census(exp, options.zero_tolerance),
        gte_zeros: zero_census(gte, options.zero_tolerance),
    })
}

impl EvalReport {
    pub fn instances_csv(&self) -> String {
        let mut out = String::from(
            "instance_id,ed_mean,ed_std,c_of_ed_mean,c_of_ed_std,second_mean,second_std,all_mean,all_std\n",
        );
        for s in &self.instances {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.instance_id,
                s.ed.mean,
                s.ed.std,
                s.c_of_ed.mean,
                s.c_of_ed.std,
                s.second_correct.mean,
                s.second_correct.std,
                s.all_correct.mean,
                s.all_correct.std
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "dataset,ave_c_of_ed,ave_second,ave_all\n{},{:.6},{:.6},{:.6}\n",
            self.dataset, self.averages.c_of_ed, self.averages.second_correct, self.averages.all_correct
        )
    }

    pub fn invariance_line(&self) -> Option<String> {
        self.invariance
            .as_ref()
            .map(|t| format!("p={:.6}, invariance_not_rejected={}", t.test.p_value, t.not_rejected))
    }

    /// Writes `report.json`, `instances.csv` and `summary.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("report.json", serde_json::to_string_pretty(self)? + "\n"),
            ("instances.csv", self.instances_csv()),
            ("summary.csv", self.summary_csv()),
        ];
        let mut paths = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            crate::model::write_atomic(&path, body.as_bytes())?;
            paths.push(path);
        }
        Ok(paths)
    }

    pub fn load(dir: &Path) -> Result<EvalReport> {
        let path = dir.join("report.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
