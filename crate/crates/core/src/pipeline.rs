//! The end-to-end commands behind the `gtebench` binary, plus the run
//! manifest that records every artifact they write.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientMatrix;
use crate::datagen::{
    default_removals, generate_equation_dataset, generate_loan, parse_removals, sha256_hex, short_hash, Dataset,
    Equation, GeneratorConfig,
};
use crate::error::{Error, Result};
use crate::evalmetrics::{build_report, EvalOptions, EvalReport, RankBy};
use crate::explainer::{Explainer, ExplainerConfig};
use crate::gte::{batch_gte, GteConfig};
use crate::model::{select_correct, train, write_atomic, Activation, Classifier, ModelConfig, TrainConfig, TrainedModel};
use crate::numerics::Rng;
use crate::svg;

pub const DATA_DIR_ENV: &str = "GTEBENCH_DATA_DIR";
pub const MANIFEST_NAME: &str = "manifest.json";

/// Stream of the explainer seed used to pick which instances get explained.
const SELECTION_STREAM: u64 = 0x5e1ec7;

/// Default directory for artifacts: `$GTEBENCH_DATA_DIR`, else `artifacts`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("artifacts"))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a TOML file, reporting errors against the file name.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().replace('\n', " | "),
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let path = std::fs::canonicalize(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub started: u64,
    pub finished: u64,
}

/// Stages run so far in one artifact directory. A rerun of a stage that wrote
/// the same outputs replaces the earlier record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunManifest {
    pub stages: Vec<Stage>,
}

impl RunManifest {
    pub fn path_for(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_NAME)
    }

    pub fn load(dir: &Path) -> Result<RunManifest> {
        let path = Self::path_for(dir);
        if !path.exists() {
            return Ok(RunManifest::default());
        }
        serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Parse {
            path,
            message: e.to_string(),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&Self::path_for(dir), (serde_json::to_string_pretty(self)? + "\n").as_bytes())
    }

    pub fn record(&mut self, stage: Stage) {
        let paths: Vec<&String> = stage.outputs.iter().map(|a| &a.path).collect();
        self.stages
            .retain(|s| !(s.name == stage.name && s.outputs.iter().map(|a| &a.path).eq(paths.iter().copied())));
        self.stages.push(stage);
    }

    /// Checks that every artifact's latest recorded checksum matches the file.
    pub fn verify(&self) -> Result<()> {
        let mut latest = std::collections::BTreeMap::new();
        for stage in &self.stages {
            for a in &stage.outputs {
                latest.insert(a.path.clone(), a.sha256.clone());
            }
        }
        for (path, sha) in latest {
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if sha256_hex(&bytes) != sha {
                return Err(Error::Incompatible {
                    detail: format!("artifact {path} changed since it was recorded"),
                    left: sha,
                    right: sha256_hex(&bytes),
                });
            }
        }
        Ok(())
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

struct StageLog {
    name: &'static str,
    started: u64,
}

impl StageLog {
    fn start(name: &'static str) -> Self {
        Self { name, started: now() }
    }

    /// Records the stage in the manifest beside the first output, then checks
    /// the whole manifest.
    fn finish(self, config_hash: String, seed: Option<u64>, inputs: &[&Path], outputs: &[PathBuf]) -> Result<()> {
        let dir = outputs
            .first()
            .and_then(|p| p.parent())
            .filter(|d| !d.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let mut manifest = RunManifest::load(&dir)?;
        manifest.record(Stage {
            name: self.name.to_string(),
            config_hash,
            seed,
            inputs: inputs.iter().map(|p| Artifact::of(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| Artifact::of(p)).collect::<Result<_>>()?,
            started: self.started,
            finished: now(),
        });
        manifest.save(&dir)?;
        manifest.verify()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Loan,
    Time,
    Distance,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Loan => "loan",
            DatasetKind::Time => "time",
            DatasetKind::Distance => "distance",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub dataset: DatasetKind,
    /// Removal list for Loan, generator config for Time and Distance.
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub rows_per_class: Option<usize>,
}

pub fn build_dataset(args: &GenerateArgs) -> Result<(Dataset, String)> {
    match args.dataset {
        DatasetKind::Loan => {
            let removals = match &args.config {
                Some(path) => {
                    let text = read_text(path)?;
                    parse_removals(&text).map_err(|e| Error::Parse {
                        path: path.clone(),
                        message: e.to_string(),
                    })?
                }
                None => default_removals(),
            };
            let hash = short_hash(format!("{removals:?}").as_bytes());
            Ok((generate_loan(&removals)?, hash))
        }
        DatasetKind::Time | DatasetKind::Distance => {
            let equation = if args.dataset == DatasetKind::Time {
                Equation::Time
            } else {
                Equation::Distance
            };
            let mut cfg = match &args.config {
                Some(path) => GeneratorConfig::load(path)?,
                None => GeneratorConfig::builtin(equation),
            };
            if cfg.equation != equation {
                return Err(Error::Config(format!(
                    "config describes {:?}, not {}",
                    cfg.equation,
                    args.dataset.name()
                )));
            }
            if let Some(seed) = args.seed {
                cfg = cfg.with_seed(seed);
            }
            if let Some(rows) = args.rows_per_class {
                cfg = cfg.with_rows_per_class(rows);
            }
            let hash = cfg.hash();
            Ok((generate_equation_dataset(&cfg)?, hash))
        }
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(Dataset, PathBuf)> {
    let log = StageLog::start("generate");
    let (dataset, hash) = build_dataset(args)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| data_dir().join(format!("{}.csv", args.dataset.name())));
    ensure_parent(&out)?;
    dataset.save(&out)?;
    let mut inputs = Vec::new();
    if let Some(c) = &args.config {
        inputs.push(c.as_path());
    }
    log.finish(hash, args.seed, &inputs, std::slice::from_ref(&out))?;
    Ok((dataset, out))
}

/// A model configuration file: network shape plus training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub network: NetworkSpec,
    pub training: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl ModelFile {
    pub fn nn1() -> Self {
        Self {
            network: NetworkSpec {
                hidden: vec![16, 16],
                activation: Activation::Relu,
            },
            training: TrainConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<ModelFile> {
        let file: ModelFile = load_toml(path)?;
        file.training.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(file)
    }

    pub fn model_config(&self, dataset: &Dataset) -> ModelConfig {
        ModelConfig::new(
            dataset.feature_count(),
            &self.network.hidden,
            self.network.activation,
            dataset.class_count(),
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

pub fn cmd_train(args: &TrainArgs) -> Result<(TrainedModel, PathBuf)> {
    let log = StageLog::start("train");
    let mut file = match &args.config {
        Some(path) => ModelFile::load(path)?,
        None => ModelFile::nn1(),
    };
    if let Some(seed) = args.seed {
        file.training.seed = seed;
    }
    let dataset = Dataset::load(&args.dataset)?;
    let model = train(&dataset, &file.model_config(&dataset), &file.training)?;
    let out = args.out.clone().unwrap_or_else(|| {
        let stem = args.config.as_deref().and_then(Path::file_stem).unwrap_or("nn1".as_ref());
        data_dir().join(format!("{}_{}.json", dataset.name(), stem.to_string_lossy()))
    });
    ensure_parent(&out)?;
    model.save(&out)?;
    let hash = short_hash(toml::to_string(&file).unwrap_or_default().as_bytes());
    let mut inputs = vec![args.dataset.as_path()];
    if let Some(c) = &args.config {
        inputs.push(c.as_path());
    }
    log.finish(hash, Some(file.training.seed), &inputs, std::slice::from_ref(&out))?;
    Ok((model, out))
}

#[derive(Debug, Clone, Default)]
pub struct ExplainArgs {
    pub model: PathBuf,
    /// Second model; only used to filter instances with `only_correct`.
    pub model2: Option<PathBuf>,
    pub dataset: PathBuf,
    pub config: Option<PathBuf>,
    pub num_samples: Option<usize>,
    pub runs: usize,
    /// Number of instances to explain; all (eligible) instances when absent.
    pub instances: Option<usize>,
    pub only_correct: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn load_explainer_config(path: Option<&Path>) -> Result<ExplainerConfig> {
    let cfg = match path {
        Some(p) => load_toml(p)?,
        None => ExplainerConfig::default(),
    };
    Ok(cfg)
}

pub fn cmd_explain(args: &ExplainArgs) -> Result<(CoefficientMatrix, PathBuf)> {
    let log = StageLog::start("explain");
    let mut cfg = load_explainer_config(args.config.as_deref())?;
    if let Some(k) = args.num_samples {
        cfg.num_samples = k;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let dataset = Dataset::load(&args.dataset)?;
    let model = TrainedModel::load(&args.model)?;
    let second = args.model2.as_deref().map(TrainedModel::load).transpose()?;
    for m in std::iter::once(&model).chain(second.as_ref()) {
        if m.dataset_hash != dataset.content_hash() {
            return Err(Error::Incompatible {
                detail: "model was trained on a different dataset".into(),
                left: m.dataset_hash.clone(),
                right: dataset.content_hash(),
            });
        }
    }

    let mut rng = Rng::new(cfg.seed).child(SELECTION_STREAM);
    let instances = if args.only_correct {
        let mut models: Vec<&dyn Classifier> = vec![&model];
        if let Some(m) = &second {
            models.push(m);
        }
        let n = match args.instances {
            Some(n) => n,
            None => {
                let mut count = 0;
                for inst in &dataset.instances {
                    if models.iter().all(|m| m.predict_class(&inst.features).ok() == Some(inst.label)) {
                        count += 1;
                    }
                }
                count
            }
        };
        select_correct(&models, &dataset.instances, n, &mut rng)?
    } else {
        match args.instances {
            Some(n) if n < dataset.len() => rng
                .sample_indices(dataset.len(), n)
                .into_iter()
                .map(|i| dataset.instances[i].clone())
                .collect(),
            Some(n) if n > dataset.len() => {
                return Err(Error::Shortfall {
                    requested: n,
                    available: dataset.len(),
                })
            }
            _ => dataset.instances.clone(),
        }
    };
    log::info!("explaining {} instances x {} runs", instances.len(), args.runs);

    let explainer = Explainer::new(&dataset, cfg)?;
    let matrix = explainer.batch_explain(&model, &instances, args.runs)?;
    for f in &matrix.meta.failures {
        log::warn!("run {} instance {}: {}", f.run, f.instance_id, f.message);
    }
    let out = args.out.clone().unwrap_or_else(|| data_dir().join("explain.csv"));
    ensure_parent(&out)?;
    matrix.save(&out)?;
    let mut inputs = vec![args.dataset.as_path(), args.model.as_path()];
    inputs.extend(args.model2.as_deref());
    inputs.extend(args.config.as_deref());
    log.finish(
        explainer.config.hash(),
        Some(explainer.config.seed),
        &inputs,
        &[out.clone(), CoefficientMatrix::meta_path(&out)],
    )?;
    Ok((matrix, out))
}

#[derive(Debug, Clone, Default)]
pub struct AlignArgs {
    pub dataset: PathBuf,
    pub config: Option<PathBuf>,
    /// One output file per value; empty means the config's value.
    pub num_samples: Vec<usize>,
    pub runs: usize,
    /// Explain the same instances as this explainer matrix, with its run count.
    pub matching: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// `gte.csv` becomes `gte_k5.csv` when several sizes are written at once.
pub fn align_output_path(out: &Path, num_samples: usize, several: bool) -> PathBuf {
    if !several {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|s| format!(".{}", s.to_string_lossy())).unwrap_or_default();
    out.with_file_name(format!("{stem}_k{num_samples}{ext}"))
}

pub fn cmd_align(args: &AlignArgs) -> Result<Vec<(CoefficientMatrix, PathBuf)>> {
    let mut cfg: GteConfig = match &args.config {
        Some(p) => load_toml(p)?,
        None => GteConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let dataset = Dataset::load(&args.dataset)?;
    let (instances, runs) = match &args.matching {
        Some(path) => {
            let exp = CoefficientMatrix::load(path)?;
            if exp.meta.dataset_hash != dataset.content_hash() {
                return Err(Error::Incompatible {
                    detail: format!("{} was computed on a different dataset", path.display()),
                    left: exp.meta.dataset_hash,
                    right: dataset.content_hash(),
                });
            }
            let by_id: std::collections::HashMap<usize, &crate::datagen::Instance> =
                dataset.instances.iter().map(|i| (i.id, i)).collect();
            let picked = exp
                .instance_ids
                .iter()
                .map(|id| {
                    by_id.get(id).map(|i| (*i).clone()).ok_or_else(|| Error::Incompatible {
                        detail: format!("instance {id} is not in the dataset"),
                        left: exp.meta.dataset_hash.clone(),
                        right: dataset.content_hash(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (picked, exp.runs)
        }
        None => (dataset.instances.clone(), args.runs),
    };
    let sizes = if args.num_samples.is_empty() {
        vec![cfg.num_samples]
    } else {
        args.num_samples.clone()
    };
    let base_out = args.out.clone().unwrap_or_else(|| data_dir().join("gte.csv"));
    ensure_parent(&base_out)?;
    let mut written = Vec::new();
    for &k in &sizes {
        let log = StageLog::start("align");
        let cfg_k = cfg.clone().with_num_samples(k);
        let matrix = batch_gte(&dataset, &instances, &cfg_k, runs)?;
        let out = align_output_path(&base_out, k, sizes.len() > 1);
        matrix.save(&out)?;
        let mut inputs = vec![args.dataset.as_path()];
        inputs.extend(args.config.as_deref());
        inputs.extend(args.matching.as_deref());
        log.finish(
            cfg_k.hash(),
            Some(cfg_k.seed),
            &inputs,
            &[out.clone(), CoefficientMatrix::meta_path(&out)],
        )?;
        written.push((matrix, out));
    }
    Ok(written)
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateArgs {
    pub explainer: PathBuf,
    pub gte: PathBuf,
    pub explainer2: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub rank_by: RankBy,
    pub zero_tolerance: f64,
}

/// Number of instances drawn in the per-instance chart.
pub const CHART_INSTANCES: usize = 100;

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(EvalReport, PathBuf)> {
    let log = StageLog::start("evaluate");
    let exp = CoefficientMatrix::load(&args.explainer)?;
    let gte = CoefficientMatrix::load(&args.gte)?;
    let exp2 = args.explainer2.as_deref().map(CoefficientMatrix::load).transpose()?;
    let options = EvalOptions {
        rank_by: args.rank_by,
        zero_tolerance: args.zero_tolerance,
    };
    let name = if gte.meta.dataset.is_empty() { "dataset" } else { &gte.meta.dataset };
    let report = build_report(name, &exp, &gte, exp2.as_ref(), &options)?;
    let dir = args.out_dir.clone().unwrap_or_else(|| data_dir().join("eval"));
    let mut outputs = report.save(&dir)?;
    let chart = dir.join("instances.svg");
    write_atomic(&chart, svg::instance_chart(&report, CHART_INSTANCES).as_bytes())?;
    outputs.push(chart);
    let mut inputs = vec![args.explainer.as_path(), args.gte.as_path()];
    inputs.extend(args.explainer2.as_deref());
    let hash = short_hash(format!("{}{}{:?}", exp.meta.config_hash, gte.meta.config_hash, options).as_bytes());
    log.finish(hash, None, &inputs, &outputs)?;
    Ok((report, dir))
}

#[derive(Debug, Clone, Default)]
pub struct ReportArgs {
    pub eval_dirs: Vec<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Series label for an evaluation directory: its final path component.
fn label_of(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

pub fn cmd_report(args: &ReportArgs) -> Result<Vec<PathBuf>> {
    if args.eval_dirs.is_empty() {
        return Err(Error::Config("report needs at least one evaluation directory".into()));
    }
    let log = StageLog::start("report");
    let reports = args
        .eval_dirs
        .iter()
        .map(|d| Ok((label_of(d), EvalReport::load(d)?)))
        .collect::<Result<Vec<_>>>()?;
    let dir = args.out_dir.clone().unwrap_or_else(|| data_dir().join("report"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut outputs = Vec::new();
    for (label, report) in &reports {
        let path = dir.join(format!("{label}_instances.svg"));
        write_atomic(&path, svg::instance_chart(report, CHART_INSTANCES).as_bytes())?;
        outputs.push(path);
    }
    let sweep = dir.join("sweep.svg");
    write_atomic(&sweep, svg::sweep_chart(&reports)?.as_bytes())?;
    outputs.push(sweep);
    let table = dir.join("summary.csv");
    write_atomic(&table, svg::summary_table(&reports).as_bytes())?;
    outputs.push(table);
    let inputs: Vec<PathBuf> = args.eval_dirs.iter().map(|d| d.join("report.json")).collect();
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    log.finish(String::new(), None, &input_refs, &outputs)?;
    Ok(outputs)
}
