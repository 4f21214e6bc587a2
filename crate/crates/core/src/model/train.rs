use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, ModelConfig};
use crate::datagen::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Anything that maps a raw feature vector to class probabilities.
pub trait Classifier: Sync {
    fn feature_count(&self) -> usize;
    fn class_count(&self) -> usize;
    fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>>;

    fn predict_class(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(features)?))
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    MinMax,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub normalization: Normalization,
    /// Fraction of instances used for training; 1.0 trains on everything.
    #[serde(default = "one")]
    pub split: f64,
    /// Stop early once the full training-set loss reaches this value.
    #[serde(default)]
    pub target_loss: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 1,
            normalization: Normalization::MinMax,
            split: 1.0,
            target_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if let Some(t) = self.target_loss {
            if !(t > 0.0) {
                return Err(Error::Config(format!("target loss must be > 0, got {t}")));
            }
        }
        if !(self.split > 0.0 && self.split <= 1.0) {
            return Err(Error::Config(format!("split must be in (0, 1], got {}", self.split)));
        }
        Ok(())
    }
}

pub const MODEL_FORMAT: &str = "gtebench-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub network: Mlp,
    pub normalization: Normalization,
    /// Per-feature offset and scale applied before the network.
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Epochs actually run; fewer than configured when the target loss was met.
    #[serde(default)]
    pub epochs_run: usize,
    #[serde(default)]
    pub final_loss: f64,
    pub train_config: TrainConfig,
    pub dataset_hash: String,
    /// Instance ids held out for testing, ascending.
    pub test_ids: Vec<usize>,
}

impl TrainedModel {
    pub fn config(&self) -> &ModelConfig {
        &self.network.config
    }

    fn normalize(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(&self.offset)
            .zip(&self.scale)
            .map(|((v, o), s)| (v - o) / s)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let model: TrainedModel = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(Error::Config(format!(
                "unsupported model file {} v{}",
                model.format, model.version
            )));
        }
        model.network.config.validate()?;
        let shapes_ok = model
            .network
            .layers
            .iter()
            .zip(model.network.config.layers.windows(2))
            .all(|(l, pair)| {
                l.inputs == pair[0]
                    && l.outputs == pair[1]
                    && l.weights.len() == pair[0] * pair[1]
                    && l.bias.len() == pair[1]
            });
        if !shapes_ok || model.network.layers.len() + 1 != model.network.config.layers.len() {
            return Err(Error::Config("model weights do not match the declared layers".into()));
        }
        Ok(model)
    }

    /// Writes atomically: a failed save leaves no partial file behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainedModel::from_json(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl Classifier for TrainedModel {
    fn feature_count(&self) -> usize {
        self.network.config.inputs()
    }

    fn class_count(&self) -> usize {
        self.network.config.classes()
    }

    fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_count() {
            return Err(Error::Dimension {
                expected: self.feature_count(),
                actual: features.len(),
            });
        }
        Ok(self.network.forward(&self.normalize(features)))
    }
}

pub fn predict(model: &impl Classifier, features: &[f64]) -> Result<Vec<f64>> {
    model.predict_proba(features)
}

/// Fraction of `instances` whose argmax prediction equals the label; 0 when empty.
pub fn accuracy(model: &(impl Classifier + ?Sized), instances: &[Instance]) -> Result<f64> {
    if instances.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for inst in instances {
        if model.predict_class(&inst.features)? == inst.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / instances.len() as f64)
}

/// Uniform sample of `n` instances that every model classifies correctly,
/// returned in dataset order.
pub fn select_correct(
    models: &[&dyn Classifier],
    instances: &[Instance],
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<Instance>> {
    let mut correct = Vec::new();
    for inst in instances {
        let mut ok = true;
        for m in models {
            if m.predict_class(&inst.features)? != inst.label {
                ok = false;
                break;
            }
        }
        if ok {
            correct.push(inst);
        }
    }
    if n > correct.len() {
        return Err(Error::Shortfall {
            requested: n,
            available: correct.len(),
        });
    }
    Ok(rng
        .sample_indices(correct.len(), n)
        .into_iter()
        .map(|i| correct[i].clone())
        .collect())
}

/// Mini-batch SGD on mean cross-entropy.
pub fn train(dataset: &Dataset, mcfg: &ModelConfig, tcfg: &TrainConfig) -> Result<TrainedModel> {
    tcfg.validate()?;
    mcfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if mcfg.inputs() != dataset.feature_count() {
        return Err(Error::Dimension {
            expected: dataset.feature_count(),
            actual: mcfg.inputs(),
        });
    }
    if mcfg.classes() != dataset.class_count() {
        return Err(Error::Dimension {
            expected: dataset.class_count(),
            actual: mcfg.classes(),
        });
    }

    let root = Rng::new(tcfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let train_len = if tcfg.split >= 1.0 {
        dataset.len()
    } else {
        root.child(1).shuffle(&mut order);
        ((dataset.len() as f64 * tcfg.split).round() as usize).clamp(1, dataset.len())
    };
    let mut train_ids = order[..train_len].to_vec();
    let mut test_ids = order[train_len..].to_vec();
    train_ids.sort_unstable();
    test_ids.sort_unstable();

    let d = dataset.feature_count();
    let (offset, scale) = match tcfg.normalization {
        Normalization::None => (vec![0.0; d], vec![1.0; d]),
        Normalization::MinMax => {
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for &i in &train_ids {
                for (j, &v) in dataset.instances[i].features.iter().enumerate() {
                    lo[j] = lo[j].min(v);
                    hi[j] = hi[j].max(v);
                }
            }
            let scale = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| if h > l { h - l } else { 1.0 })
                .collect();
            (lo, scale)
        }
    };

    let mut model = TrainedModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        network: Mlp::init(mcfg.clone(), &mut root.child(0))?,
        normalization: tcfg.normalization,
        offset,
        scale,
        train_accuracy: 0.0,
        test_accuracy: None,
        epochs_run: 0,
        final_loss: 0.0,
        train_config: tcfg.clone(),
        dataset_hash: dataset.content_hash(),
        test_ids: test_ids.clone(),
    };

    let inputs: Vec<Vec<f64>> = train_ids
        .iter()
        .map(|&i| model.normalize(&dataset.instances[i].features))
        .collect();
    let labels: Vec<usize> = train_ids.iter().map(|&i| dataset.instances[i].label).collect();

    let mut shuffle_rng = root.child(2);
    let mut perm: Vec<usize> = (0..inputs.len()).collect();
    let mut params = model.network.params();
    for epoch in 0..tcfg.epochs {
        shuffle_rng.shuffle(&mut perm);
        let mut epoch_loss = 0.0;
        for batch in perm.chunks(tcfg.batch_size) {
            let xs: Vec<Vec<f64>> = batch.iter().map(|&i| inputs[i].clone()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = model.network.loss_and_gradient(&xs, &ys);
            if loss.is_nan() {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= tcfg.learning_rate * g;
            }
            model.network.set_params(&params);
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        model.epochs_run = epoch + 1;
        if let Some(target) = tcfg.target_loss {
            model.final_loss = model.network.loss_and_gradient(&inputs, &labels).0;
            if model.final_loss <= target {
                break;
            }
        }
    }

    model.final_loss = model.network.loss_and_gradient(&inputs, &labels).0;
    let train_set: Vec<Instance> = train_ids.iter().map(|&i| dataset.instances[i].clone()).collect();
    model.train_accuracy = accuracy(&model, &train_set)?;
    if !test_ids.is_empty() {
        let test_set: Vec<Instance> = test_ids.iter().map(|&i| dataset.instances[i].clone()).collect();
        model.test_accuracy = Some(accuracy(&model, &test_set)?);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{default_removals, generate_loan};

    fn loan_model(tcfg: &TrainConfig) -> (Dataset, TrainedModel) {
        let ds = generate_loan(&default_removals()).unwrap();
        let m = train(&ds, &ModelConfig::nn1(3, 2), tcfg).unwrap();
        (ds, m)
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 1500,
            learning_rate: 0.1,
            batch_size: 8,
            ..Default::default()
        }
    }

    #[test]
    fn loan_reaches_full_accuracy() {
        let (_, m) = loan_model(&quick());
        assert_eq!(m.train_accuracy, 1.0);
        assert_eq!(m.test_accuracy, None);
        assert_eq!(m.epochs_run, 1500);
    }

    #[test]
    fn training_is_deterministic() {
        let (_, a) = loan_model(&quick());
        let (_, b) = loan_model(&quick());
        assert_eq!(a.network.params(), b.network.params());
    }

    #[test]
    fn target_loss_stops_early() {
        let cfg = TrainConfig {
            epochs: 50_000,
            target_loss: Some(1e-2),
            ..quick()
        };
        let (_, m) = loan_model(&cfg);
        assert!(m.epochs_run < 50_000);
        assert!(m.final_loss <= 1e-2);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let (ds, m) = loan_model(&TrainConfig { epochs: 20, ..quick() });
        let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
        for inst in &ds.instances {
            let a = m.predict_proba(&inst.features).unwrap();
            let b = back.predict_proba(&inst.features).unwrap();
            assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(TrainedModel::load(&path).unwrap(), m);
    }

    #[test]
    fn split_holds_out_instances() {
        let (ds, m) = loan_model(&TrainConfig { epochs: 5, split: 0.8, ..quick() });
        assert_eq!(m.test_ids.len(), ds.len() - 43);
        assert!(m.test_accuracy.is_some());
    }

    #[test]
    fn bad_settings_are_rejected() {
        for cfg in [
            TrainConfig { learning_rate: 0.0, ..quick() },
            TrainConfig { batch_size: 0, ..quick() },
            TrainConfig { split: 0.0, ..quick() },
            TrainConfig { target_loss: Some(-1.0), ..quick() },
        ] {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn select_correct_samples_jointly_correct() {
        let (ds, m) = loan_model(&quick());
        let picked = select_correct(&[&m], &ds.instances, 10, &mut Rng::new(1)).unwrap();
        assert_eq!(picked.len(), 10);
        assert!(picked.windows(2).all(|w| w[0].id < w[1].id));
        assert!(matches!(
            select_correct(&[&m], &ds.instances, 55, &mut Rng::new(1)),
            Err(Error::Shortfall { requested: 55, available: 54 })
        ));
    }
}
