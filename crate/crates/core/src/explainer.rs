//! Local surrogate explanations: perturb an instance, keep the perturbations
//! most cosine-similar to it, and fit a similarity-weighted ridge regression
//! to the model's probability for the predicted class.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientMatrix, MatrixMeta, SlotFailure, Source};
use crate::datagen::{short_hash, Dataset, FeatureSchema, FeatureStats, Instance};
use crate::error::{Error, Result};
use crate::model::{argmax, Classifier};
use crate::numerics::{cosine_similarity, weighted_ridge, Rng};

pub const MAX_DEFAULT_POOL: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Rank the pool by cosine similarity and keep the top `num_samples`,
    /// weighting each by its similarity.
    #[default]
    TopK,
    /// Use `num_samples` unranked perturbations weighted by an exponential
    /// kernel on cosine distance.
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainerConfig {
    pub num_samples: usize,
    /// Size of the perturbation pool; `None` means `20 * num_samples`, capped.
    pub perturbations: Option<usize>,
    pub alpha: f64,
    /// Multipliers on each feature's training standard deviation. Empty means 1.
    pub scale: Vec<f64>,
    /// Clamp perturbations to the feature intervals and round to precision.
    pub clamp_to_schema: bool,
    pub selection: Selection,
    pub kernel_width: f64,
    pub seed: u64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            num_samples: 25,
            perturbations: None,
            alpha: 1.0,
            scale: Vec::new(),
            clamp_to_schema: false,
            selection: Selection::TopK,
            kernel_width: 0.25,
            seed: 0,
        }
    }
}

impl ExplainerConfig {
    pub fn with_num_samples(mut self, k: usize) -> Self {
        self.num_samples = k;
        self
    }

    pub fn pool_size(&self) -> usize {
        self.perturbations
            .unwrap_or_else(|| (20 * self.num_samples).min(MAX_DEFAULT_POOL).max(self.num_samples))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be at least 1".into()));
        }
        if self.num_samples > self.pool_size() {
            return Err(Error::Config(format!(
                "num_samples ({}) exceeds the perturbation pool ({})",
                self.num_samples,
                self.pool_size()
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.scale.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Config("perturbation scales must be >= 0".into()));
        }
        if self.selection == Selection::Kernel && !(self.kernel_width > 0.0) {
            return Err(Error::Config("kernel width must be > 0".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Draws `n` points around `instance`; feature `j` is
/// `Normal(instance[j], scale[j] * std[j])`.
pub fn perturb_instance(
    instance: &[f64],
    stats: &FeatureStats,
    scale: &[f64],
    n: usize,
    clamp: Option<&FeatureSchema>,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    let d = instance.len();
    if stats.std.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: stats.std.len(),
        });
    }
    if !scale.is_empty() && scale.len() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: scale.len(),
        });
    }
    let spread: Vec<f64> = (0..d)
        .map(|j| stats.std[j] * scale.get(j).copied().unwrap_or(1.0))
        .collect();
    Ok((0..n)
        .map(|_| {
            let mut p: Vec<f64> = instance
                .iter()
                .zip(&spread)
                .map(|(x, s)| x + s * rng.standard_normal())
                .collect();
            if let Some(schema) = clamp {
                schema.conform(&mut p);
            }
            p
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub predicted_class: usize,
    /// Rows that entered the regression, the instance included.
    pub rows: usize,
}

/// Training-data context an explanation needs: feature spreads and the schema.
#[derive(Debug, Clone)]
pub struct Explainer {
    pub config: ExplainerConfig,
    pub stats: FeatureStats,
    pub schema: FeatureSchema,
    pub dataset: String,
    pub dataset_hash: String,
}

impl Explainer {
    pub fn new(dataset: &Dataset, config: ExplainerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            stats: dataset.feature_stats(),
            schema: dataset.schema().clone(),
            dataset: dataset.name().to_string(),
            dataset_hash: dataset.content_hash(),
        })
    }

    fn spread_is_degenerate(&self) -> bool {
        self.stats
            .std
            .iter()
            .enumerate()
            .all(|(j, s)| s * self.config.scale.get(j).copied().unwrap_or(1.0) == 0.0)
    }

    /// Draws one perturbation pool, redrawing points whose similarity is
    /// undefined so the pool always has its full size.
    fn pool(&self, instance: &[f64], size: usize, rng: &mut Rng) -> Result<Vec<(Vec<f64>, f64)>> {
        let clamp = self.config.clamp_to_schema.then_some(&self.schema);
        let mut out = Vec::with_capacity(size);
        let mut attempts = 0usize;
        while out.len() < size {
            attempts += 1;
            if attempts > 100 {
                return Err(Error::UndefinedSimilarity);
            }
            let need = size - out.len();
            for p in perturb_instance(instance, &self.stats, &self.config.scale, need, clamp, rng)? {
                match cosine_similarity(instance, &p) {
                    Ok(s) => out.push((p, s)),
                    Err(Error::UndefinedSimilarity) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(out)
    }

    pub fn explain(&self, model: &(impl Classifier + ?Sized), instance: &[f64], rng: &mut Rng) -> Result<Explanation> {
        if instance.len() != model.feature_count() {
            return Err(Error::Dimension {
                expected: model.feature_count(),
                actual: instance.len(),
            });
        }
        if instance.len() != self.schema.len() {
            return Err(Error::Dimension {
                expected: self.schema.len(),
                actual: instance.len(),
            });
        }
        if self.spread_is_degenerate() {
            return Err(Error::DegeneratePerturbation);
        }
        let self_similarity = cosine_similarity(instance, instance)?;
        let probs = model.predict_proba(instance)?;
        let class = argmax(&probs);
        let k = self.config.num_samples;

        let (points, weights): (Vec<Vec<f64>>, Vec<f64>) = match self.config.selection {
            Selection::TopK => {
                let mut pool = self.pool(instance, self.config.pool_size(), rng)?;
                let mut order: Vec<usize> = (0..pool.len()).collect();
                order.sort_by(|&a, &b| pool[b].1.total_cmp(&pool[a].1).then(a.cmp(&b)));
                order.truncate(k);
                order
                    .into_iter()
                    .map(|i| {
                        let (p, s) = std::mem::take(&mut pool[i]);
                        (p, s.max(0.0))
                    })
                    .unzip()
            }
            Selection::Kernel => {
                let width = self.config.kernel_width;
                self.pool(instance, k, rng)?
                    .into_iter()
                    .map(|(p, s)| {
                        let dist = 1.0 - s;
                        (p, (-(dist * dist) / (width * width)).exp())
                    })
                    .unzip()
            }
        };

        let mut x = Vec::with_capacity(k + 1);
        let mut y = Vec::with_capacity(k + 1);
        let mut w = Vec::with_capacity(k + 1);
        x.push(instance.to_vec());
        y.push(probs[class]);
        w.push(self_similarity);
        for (p, wi) in points.into_iter().zip(weights) {
            y.push(model.predict_proba(&p)?[class]);
            x.push(p);
            w.push(wi);
        }
        let fit = weighted_ridge(&x, &y, &w, self.config.alpha)?;
        Ok(Explanation {
            coefficients: fit.coefficients,
            intercept: fit.intercept,
            predicted_class: class,
            rows: x.len(),
        })
    }

    /// Generator for `(run, instance id)`.
    pub fn slot_rng(base_seed: u64, run: usize, instance_id: usize) -> Rng {
        Rng::new(base_seed).child(run as u64).child(instance_id as u64)
    }

    /// Explains every instance `runs` times. Failed slots are recorded and left
    /// as NaN; the batch carries on.
    pub fn batch_explain(
        &self,
        model: &(impl Classifier + ?Sized),
        instances: &[Instance],
        runs: usize,
    ) -> Result<CoefficientMatrix> {
        if runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        let base = self.config.seed;
        let n = instances.len();
        let results: Vec<Result<Explanation>> = (0..runs * n)
            .into_par_iter()
            .map(|k| {
                let (run, slot) = (k / n, k % n);
                let inst = &instances[slot];
                let mut rng = Self::slot_rng(base, run, inst.id);
                self.explain(model, &inst.features, &mut rng)
            })
            .collect();

        let meta = MatrixMeta {
            source: Source::Explainer,
            config_hash: self.config.hash(),
            dataset: self.dataset.clone(),
            dataset_hash: self.dataset_hash.clone(),
            seed: base,
            feature_names: self.schema.names().iter().map(|s| s.to_string()).collect(),
            failures: Vec::new(),
        };
        let mut matrix = CoefficientMatrix::new(meta, runs, instances.iter().map(|i| i.id).collect());
        for (k, result) in results.into_iter().enumerate() {
            let (run, slot) = (k / n, k % n);
            match result {
                Ok(e) => matrix.set(run, slot, &e.coefficients, e.intercept),
                Err(e) => matrix.meta.failures.push(SlotFailure {
                    run,
                    instance_id: instances[slot].id,
                    message: e.to_string(),
                }),
            }
        }
        Ok(matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{default_removals, generate_loan};

    /// Two-class model whose class-1 probability is an affine function.
    struct Linear {
        weights: Vec<f64>,
        bias: f64,
    }

    impl Classifier for Linear {
        fn feature_count(&self) -> usize {
            self.weights.len()
        }
        fn class_count(&self) -> usize {
            2
        }
        fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
            let p = self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            Ok(vec![1.0 - p, p])
        }
    }

    fn loan() -> Dataset {
        generate_loan(&default_removals()).unwrap()
    }

    #[test]
    fn zero_scale_gives_copies() {
        let ds = loan();
        let stats = ds.feature_stats();
        let mut rng = Rng::new(1);
        let pts = perturb_instance(&[3.0, 1.0, 2.0], &stats, &[0.0; 3], 10, None, &mut rng).unwrap();
        assert_eq!(pts.len(), 10);
        assert!(pts.iter().all(|p| p == &vec![3.0, 1.0, 2.0]));
    }

    #[test]
    fn pool_shape() {
        let ds = loan();
        let stats = ds.feature_stats();
        let mut rng = Rng::new(2);
        let pts = perturb_instance(&[3.0, 1.0, 2.0], &stats, &[], 1000, None, &mut rng).unwrap();
        assert_eq!(pts.len(), 1000);
        assert!(pts.iter().all(|p| p.len() == 3));
    }

    #[test]
    fn clamped_loan_perturbations_are_valid_codes() {
        let ds = loan();
        let stats = ds.feature_stats();
        let mut rng = Rng::new(3);
        let pts = perturb_instance(&[5.0, 0.0, 3.0], &stats, &[2.0; 3], 2000, Some(ds.schema()), &mut rng).unwrap();
        for p in pts {
            ds.schema().check(&p).unwrap();
            assert!(p.iter().all(|v| v.fract() == 0.0));
        }
    }

    #[test]
    fn recovers_linear_model_weights() {
        let ds = loan();
        let model = Linear {
            weights: vec![0.05, -0.03, 0.02],
            bias: 0.4,
        };
        let cfg = ExplainerConfig {
            num_samples: 200,
            alpha: 0.0,
            scale: vec![3.0; 3],
            ..Default::default()
        };
        let explainer = Explainer::new(&ds, cfg).unwrap();
        let e = explainer.explain(&model, &[4.0, 1.0, 2.0], &mut Rng::new(5)).unwrap();
        assert_eq!(e.predicted_class, 1);
        for (got, want) in e.coefficients.iter().zip(&model.weights) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        assert_eq!(e.rows, 201);
    }

    #[test]
    fn converges_with_large_pool() {
        let ds = loan();
        let model = Linear {
            weights: vec![0.1, 0.2, -0.05],
            bias: 0.1,
        };
        let cfg = ExplainerConfig {
            num_samples: 10_000,
            perturbations: Some(10_000),
            alpha: 0.0,
            ..Default::default()
        };
        let e = Explainer::new(&ds, cfg).unwrap().explain(&model, &[3.0, 2.0, 1.0], &mut Rng::new(8)).unwrap();
        for (got, want) in e.coefficients.iter().zip(&model.weights) {
            assert!((got - want).abs() <= 1e-2);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let ds = loan();
        let model = Linear {
            weights: vec![0.05, -0.03, 0.02],
            bias: 0.4,
        };
        let explainer = Explainer::new(&ds, ExplainerConfig::default()).unwrap();
        let a = explainer.explain(&model, &[4.0, 1.0, 2.0], &mut Rng::new(9)).unwrap();
        let b = explainer.explain(&model, &[4.0, 1.0, 2.0], &mut Rng::new(9)).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
        assert_eq!(a.intercept.to_bits(), b.intercept.to_bits());
    }

    #[test]
    fn num_samples_above_pool_is_rejected() {
        let cfg = ExplainerConfig {
            num_samples: 50,
            perturbations: Some(10),
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert_eq!(ExplainerConfig::default().with_num_samples(10_000).pool_size(), MAX_DEFAULT_POOL);
    }

    #[test]
    fn kernel_selection_uses_num_samples_rows() {
        let ds = loan();
        let model = Linear {
            weights: vec![0.05, -0.03, 0.02],
            bias: 0.4,
        };
        let cfg = ExplainerConfig {
            num_samples: 40,
            selection: Selection::Kernel,
            alpha: 0.0,
            ..Default::default()
        };
        let e = Explainer::new(&ds, cfg).unwrap().explain(&model, &[4.0, 1.0, 2.0], &mut Rng::new(1)).unwrap();
        assert_eq!(e.rows, 41);
        assert!((e.coefficients[0] - 0.05).abs() < 1e-9);
    }

    #[test]
    fn degenerate_spread_is_an_error() {
        let ds = loan();
        let cfg = ExplainerConfig {
            scale: vec![0.0; 3],
            ..Default::default()
        };
        let model = Linear {
            weights: vec![0.0; 3],
            bias: 0.5,
        };
        let err = Explainer::new(&ds, cfg).unwrap().explain(&model, &[4.0, 1.0, 2.0], &mut Rng::new(1));
        assert!(matches!(err, Err(Error::DegeneratePerturbation)));
    }

    #[test]
    fn batch_shape_and_single_run_composition() {
        let ds = loan();
        let model = Linear {
            weights: vec![0.05, -0.03, 0.02],
            bias: 0.4,
        };
        let explainer = Explainer::new(&ds, ExplainerConfig { seed: 77, ..Default::default() }).unwrap();
        let m = explainer.batch_explain(&model, &ds.instances[..5], 3).unwrap();
        assert_eq!(m.shape(), (3, 5, 3));
        assert!(m.is_complete());
        let one = explainer.batch_explain(&model, &ds.instances[..5], 1).unwrap();
        for (slot, inst) in ds.instances[..5].iter().enumerate() {
            let e = explainer
                .explain(&model, &inst.features, &mut Explainer::slot_rng(77, 0, inst.id))
                .unwrap();
            assert_eq!(one.coefficients(0, slot), &e.coefficients[..]);
            assert_eq!(m.coefficients(0, slot), &e.coefficients[..]);
        }
        assert!(explainer.batch_explain(&model, &ds.instances[..5], 0).is_err());
    }
}
