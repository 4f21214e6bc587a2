//! Ground-truth explanations: the explainer's final regression step run on
//! real neighbors from the generated data, with labels taken from the
//! generating equations instead of a model.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientMatrix, MatrixMeta, SlotFailure, Source};
use crate::datagen::{short_hash, Dataset, Instance};
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, weighted_ridge, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GteConfig {
    pub num_samples: usize,
    pub alpha: f64,
    /// Break similarity ties with a per-run random key instead of instance id.
    pub resample_per_run: bool,
    pub seed: u64,
}

impl Default for GteConfig {
    fn default() -> Self {
        Self {
            num_samples: 25,
            alpha: 1.0,
            resample_per_run: false,
            seed: 0,
        }
    }
}

impl GteConfig {
    pub fn with_num_samples(mut self, k: usize) -> Self {
        self.num_samples = k;
        self
    }

    pub fn validate_for(&self, dataset_len: usize) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be at least 1".into()));
        }
        if self.num_samples >= dataset_len {
            return Err(Error::Config(format!(
                "num_samples ({}) must be smaller than the dataset ({} instances)",
                self.num_samples, dataset_len
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_vec(self).expect("config serializes"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GteExplanation {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Ids of the dataset instances that entered the fit, target first.
    pub neighbors: Vec<usize>,
}

/// Fits the ground-truth surrogate for `target`. With `tie_rng`, equal
/// similarities are ordered by a random key drawn from it.
pub fn gte_explain(dataset: &Dataset, target: &Instance, cfg: &GteConfig, tie_rng: Option<&mut Rng>) -> Result<GteExplanation> {
    cfg.validate_for(dataset.len())?;
    let d = dataset.feature_count();
    if target.features.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: target.features.len(),
        });
    }
    let self_similarity = cosine_similarity(&target.features, &target.features)?;

    let mut scored = Vec::with_capacity(dataset.len());
    for inst in &dataset.instances {
        if inst.id == target.id {
            continue;
        }
        let s = cosine_similarity(&target.features, &inst.features)?;
        scored.push((s, inst.id as u64, inst));
    }
    if let Some(rng) = tie_rng {
        for entry in &mut scored {
            entry.1 = rng.next_u64();
        }
    }
    let order = |a: &(f64, u64, &Instance), b: &(f64, u64, &Instance)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    let k = cfg.num_samples;
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, order);
        scored.truncate(k);
    }
    scored.sort_by(order);

    let mut x = vec![target.features.clone()];
    let mut y = vec![1.0];
    let mut w = vec![self_similarity];
    let mut neighbors = vec![target.id];
    for (s, _, inst) in scored {
        x.push(inst.features.clone());
        y.push(if inst.label == target.label { 1.0 } else { 0.0 });
        w.push(s.max(0.0));
        neighbors.push(inst.id);
    }
    let fit = weighted_ridge(&x, &y, &w, cfg.alpha)?;
    Ok(GteExplanation {
        coefficients: fit.coefficients,
        intercept: fit.intercept,
        neighbors,
    })
}

/// Runs `gte_explain` for every instance and run. Without resampling all runs
/// are identical.
pub fn batch_gte(dataset: &Dataset, instances: &[Instance], cfg: &GteConfig, runs: usize) -> Result<CoefficientMatrix> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    cfg.validate_for(dataset.len())?;
    let n = instances.len();
    // Without resampling every run is the same fit; compute it once.
    let distinct = if cfg.resample_per_run { runs } else { 1 };
    let results: Vec<Result<GteExplanation>> = (0..distinct * n)
        .into_par_iter()
        .map(|k| {
            let (run, slot) = (k / n, k % n);
            let inst = &instances[slot];
            if cfg.resample_per_run {
                let mut rng = Rng::new(cfg.seed).child(run as u64).child(inst.id as u64);
                gte_explain(dataset, inst, cfg, Some(&mut rng))
            } else {
                gte_explain(dataset, inst, cfg, None)
            }
        })
        .collect();

    let meta = MatrixMeta {
        source: Source::Gte,
        config_hash: cfg.hash(),
        dataset: dataset.name().to_string(),
        dataset_hash: dataset.content_hash(),
        seed: cfg.seed,
        feature_names: dataset.schema().names().iter().map(|s| s.to_string()).collect(),
        failures: Vec::new(),
    };
    let mut matrix = CoefficientMatrix::new(meta, runs, instances.iter().map(|i| i.id).collect());
    for run in 0..runs {
        for slot in 0..n {
            match &results[(run % distinct) * n + slot] {
                Ok(e) => matrix.set(run, slot, &e.coefficients, e.intercept),
                Err(e) => matrix.meta.failures.push(SlotFailure {
                    run,
                    instance_id: instances[slot].id,
                    message: e.to_string(),
                }),
            }
        }
    }
    Ok(matrix)
}
