//! Time and Distance energy datasets: base rows drawn from truncated normals,
//! one class per variation of the base equation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::schema::{short_hash, Dataset, DatasetMeta, FeatureKind, FeatureSchema, FeatureSpec, Instance};
use crate::error::{Error, Result};
use crate::numerics::{truncated_normal, truncated_normal_quantile, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Time,
    Distance,
}

impl Equation {
    pub fn name(self) -> &'static str {
        match self {
            Equation::Time => "time",
            Equation::Distance => "distance",
        }
    }

    /// Variables the equation reads, mode last.
    pub fn variables(self) -> &'static [&'static str] {
        match self {
            Equation::Time => &["TT", "Speed", "FE", "m"],
            Equation::Distance => &["TF", "TD", "TO", "EI", "m"],
        }
    }

    /// Evaluates the base equation on a row laid out by `schema`.
    pub fn energy(self, schema: &FeatureSchema, row: &[f64]) -> Result<f64> {
        let get = |name: &str| {
            schema
                .index_of(name)
                .map(|i| row[i])
                .ok_or_else(|| Error::Schema(format!("schema lacks variable {name}")))
        };
        match self {
            Equation::Time => Ok(base_energy_time(get("TT")?, get("Speed")?, get("FE")?)),
            Equation::Distance => {
                base_energy_distance(get("TF")?, get("TD")?, get("TO")?, get("EI")?)
            }
        }
    }
}

/// Travel energy from trip frequency, distance, occupancy and intensity.
pub fn base_energy_distance(tf: f64, td: f64, to: f64, ei: f64) -> Result<f64> {
    if to == 0.0 {
        return Err(Error::Domain("transport occupancy TO must be nonzero".into()));
    }
    Ok(tf * td / to * ei)
}

/// Travel energy from travel time, speed and fuel economy for one mode.
pub fn base_energy_time(tt: f64, speed: f64, fe: f64) -> f64 {
    tt * speed * fe
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Multiply,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationOp {
    pub target: String,
    pub op: OpKind,
    pub param: f64,
}

impl VariationOp {
    pub fn multiply(target: &str, k: f64) -> Self {
        Self {
            target: target.into(),
            op: OpKind::Multiply,
            param: k,
        }
    }

    pub fn power(target: &str, p: f64) -> Self {
        Self {
            target: target.into(),
            op: OpKind::Power,
            param: p,
        }
    }

    fn apply(&self, v: f64) -> f64 {
        match self.op {
            OpKind::Multiply => v * self.param,
            OpKind::Power => v.powf(self.param),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationSpec {
    pub class: usize,
    #[serde(default)]
    pub ops: Vec<VariationOp>,
}

/// Applies `spec`'s operations in order, then clamps and rounds to the schema.
pub fn apply_variation(row: &Instance, spec: &VariationSpec, schema: &FeatureSchema) -> Result<Instance> {
    let mut features = row.features.clone();
    for op in &spec.ops {
        let j = schema
            .index_of(&op.target)
            .ok_or_else(|| Error::Schema(format!("variation targets unknown variable {}", op.target)))?;
        let v = op.apply(features[j]);
        if !v.is_finite() {
            return Err(Error::VariationDomain {
                variable: op.target.clone(),
                class: spec.class,
            });
        }
        features[j] = v;
    }
    schema.conform(&mut features);
    Ok(Instance {
        id: row.id,
        features,
        label: spec.class,
        variation_id: spec.class,
        energy: row.energy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Truncation {
    fn draw(&self, rng: &mut Rng) -> Result<f64> {
        truncated_normal(self.mu, self.sigma, self.lo, self.hi, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Draw {
    /// Integer travel-mode code, uniform over the feature interval.
    Mode,
    Global(Truncation),
    /// One truncation per mode code, in ascending code order.
    PerMode(Vec<Truncation>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub feature: FeatureSpec,
    pub draw: Draw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Independent truncated-normal draws per variable.
    #[default]
    Iid,
    /// Cartesian product of truncated-normal quantile levels.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub equation: Equation,
    pub rows_per_class: usize,
    pub seed: u64,
    pub sampling: SamplingMode,
    pub grid_levels: usize,
    pub variables: Vec<VariableSpec>,
    pub variations: Vec<VariationSpec>,
}

const TIME_FULL: &str = include_str!("../../configs/time.toml");
const DISTANCE_FULL: &str = include_str!("../../configs/distance.toml");

impl GeneratorConfig {
    /// Shipped configuration at the full row counts.
    pub fn builtin(equation: Equation) -> GeneratorConfig {
        let (text, name) = match equation {
            Equation::Time => (TIME_FULL, "configs/time.toml"),
            Equation::Distance => (DISTANCE_FULL, "configs/distance.toml"),
        };
        GeneratorConfig::parse(text, Path::new(name)).expect("shipped config is valid")
    }

    pub fn with_rows_per_class(mut self, rows: usize) -> Self {
        self.rows_per_class = rows;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn load(path: &Path) -> Result<GeneratorConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GeneratorConfig::parse(&text, path)
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            features: self.variables.iter().map(|v| v.feature.clone()).collect(),
        }
    }

    pub fn class_count(&self) -> usize {
        self.variations.len()
    }

    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_vec(self).expect("config serializes"))
    }

    fn mode_codes(&self) -> Vec<f64> {
        self.variables
            .iter()
            .find(|v| matches!(v.draw, Draw::Mode))
            .map(|v| {
                let (lo, hi) = (v.feature.lo as i64, v.feature.hi as i64);
                (lo..=hi).map(|c| c as f64).collect()
            })
            .unwrap_or_default()
    }

    /// Re-checks invariants after programmatic edits.
    pub fn validate(&self) -> Result<()> {
        if self.rows_per_class == 0 {
            return Err(Error::Config("rows_per_class must be at least 1".into()));
        }
        if self.variations.is_empty() {
            return Err(Error::Config("at least one variation is required".into()));
        }
        for (i, v) in self.variations.iter().enumerate() {
            if v.class != i {
                return Err(Error::Config(format!(
                    "variation {i} declares class {}; classes must be contiguous from 0",
                    v.class
                )));
            }
        }
        if self.sampling == SamplingMode::Grid {
            let continuous = self
                .variables
                .iter()
                .filter(|v| !matches!(v.draw, Draw::Mode))
                .count() as u32;
            let expected = self.mode_codes().len().max(1) * self.grid_levels.pow(continuous);
            if expected != self.rows_per_class {
                return Err(Error::Config(format!(
                    "grid sampling with {} levels yields {expected} rows per class, but rows_per_class = {}",
                    self.grid_levels, self.rows_per_class
                )));
            }
        }
        Ok(())
    }
}

// ---- file format -----------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    equation: Spanned<Equation>,
    rows_per_class: Spanned<usize>,
    seed: u64,
    #[serde(default)]
    sampling: SamplingMode,
    #[serde(default)]
    grid_levels: Option<usize>,
    variables: Vec<Spanned<RawVariable>>,
    variations: Vec<Spanned<VariationSpec>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariable {
    name: String,
    #[serde(default)]
    mode: bool,
    interval: [f64; 2],
    #[serde(default = "default_precision")]
    precision: u32,
    sampling: Option<Truncation>,
    per_mode: Option<Vec<Truncation>>,
}

fn default_precision() -> u32 {
    3
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl GeneratorConfig {
    /// Parses and validates a TOML generator config; errors carry `path:line`.
    pub fn parse(text: &str, path: &Path) -> Result<GeneratorConfig> {
        let at = |offset: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {message}", line_of(text, offset)),
        };
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let offset = e.span().map(|s| s.start).unwrap_or(0);
            at(offset, e.message().to_string())
        })?;

        let equation = *raw.equation.get_ref();
        let required = equation.variables();
        let names: Vec<&str> = raw.variables.iter().map(|v| v.get_ref().name.as_str()).collect();
        if names != required {
            return Err(at(
                raw.equation.span().start,
                format!("{} equation needs variables {required:?} in that order, found {names:?}", equation.name()),
            ));
        }

        let mut mode_count = 0usize;
        let mut variables = Vec::new();
        for sv in &raw.variables {
            let v = sv.get_ref();
            let here = sv.span().start;
            let [lo, hi] = v.interval;
            if !(lo <= hi) {
                return Err(at(here, format!("{}: interval [{lo}, {hi}] is empty", v.name)));
            }
            if v.mode {
                if lo.fract() != 0.0 || hi.fract() != 0.0 {
                    return Err(at(here, format!("{}: mode codes must be integers", v.name)));
                }
                mode_count = (hi - lo) as usize + 1;
                variables.push(VariableSpec {
                    feature: FeatureSpec::integer(&v.name, FeatureKind::Mode, lo, hi),
                    draw: Draw::Mode,
                });
            }
        }
        for sv in &raw.variables {
            let v = sv.get_ref();
            if v.mode {
                continue;
            }
            let here = sv.span().start;
            let [lo, hi] = v.interval;
            if v.name == "TO" && lo <= 0.0 {
                return Err(at(here, "TO interval must be strictly positive".into()));
            }
            let check = |t: &Truncation| -> Result<()> {
                if !(t.lo <= t.hi) || t.lo < lo || t.hi > hi || !(t.sigma >= 0.0) {
                    return Err(at(
                        here,
                        format!(
                            "{}: truncation [{}, {}] (sigma {}) must lie within interval [{lo}, {hi}]",
                            v.name, t.lo, t.hi, t.sigma
                        ),
                    ));
                }
                Ok(())
            };
            let draw = match (&v.sampling, &v.per_mode) {
                (Some(t), None) => {
                    check(t)?;
                    Draw::Global(*t)
                }
                (None, Some(table)) => {
                    if table.len() != mode_count {
                        return Err(at(
                            here,
                            format!("{}: per_mode has {} entries for {mode_count} modes", v.name, table.len()),
                        ));
                    }
                    table.iter().try_for_each(check)?;
                    Draw::PerMode(table.clone())
                }
                _ => {
                    return Err(at(
                        here,
                        format!("{}: give exactly one of `sampling` or `per_mode`", v.name),
                    ))
                }
            };
            variables.push(VariableSpec {
                feature: FeatureSpec {
                    name: v.name.clone(),
                    kind: FeatureKind::Continuous,
                    lo,
                    hi,
                    precision: v.precision,
                },
                draw,
            });
        }
        // Restore declared order (mode was pulled first to size per-mode tables).
        variables.sort_by_key(|v| names.iter().position(|n| *n == v.feature.name));

        let mut variations = Vec::new();
        for (i, sv) in raw.variations.iter().enumerate() {
            let spec = sv.get_ref();
            let here = sv.span().start;
            if spec.class != i {
                return Err(at(here, format!("variation {i} declares class {}; classes must be contiguous from 0", spec.class)));
            }
            if i > 0 && spec.ops.is_empty() {
                return Err(at(here, format!("variation {i} has no operations")));
            }
            for op in &spec.ops {
                let Some(var) = variables.iter().find(|v| v.feature.name == op.target) else {
                    return Err(at(here, format!("variation {i} targets unknown variable {}", op.target)));
                };
                if matches!(var.draw, Draw::Mode) {
                    return Err(at(here, format!("variation {i} may not transform the travel mode")));
                }
                if !op.param.is_finite() || op.param == 0.0 {
                    return Err(at(here, format!("variation {i}: parameter must be finite and nonzero")));
                }
            }
            variations.push(spec.clone());
        }

        let config = GeneratorConfig {
            equation,
            rows_per_class: *raw.rows_per_class.get_ref(),
            seed: raw.seed,
            sampling: raw.sampling,
            grid_levels: raw.grid_levels.unwrap_or(0),
            variables,
            variations,
        };
        config
            .validate()
            .map_err(|e| at(raw.rows_per_class.span().start, e.to_string()))?;
        Ok(config)
    }
}

// ---- generation ------------------------------------------------------------

fn draw_base_rows(config: &GeneratorConfig) -> Result<Vec<Vec<f64>>> {
    let codes = config.mode_codes();
    let mode_index = config.variables.iter().position(|v| matches!(v.draw, Draw::Mode));
    match config.sampling {
        SamplingMode::Iid => {
            let mut rng = Rng::new(config.seed).child(0);
            let mut rows = Vec::with_capacity(config.rows_per_class);
            for _ in 0..config.rows_per_class {
                let mode_slot = if codes.is_empty() {
                    0
                } else {
                    rng.int_inclusive(0, codes.len() as i64 - 1) as usize
                };
                let mut row = Vec::with_capacity(config.variables.len());
                for v in &config.variables {
                    row.push(match &v.draw {
                        Draw::Mode => codes[mode_slot],
                        Draw::Global(t) => t.draw(&mut rng)?,
                        Draw::PerMode(table) => table[mode_slot].draw(&mut rng)?,
                    });
                }
                rows.push(row);
            }
            Ok(rows)
        }
        SamplingMode::Grid => {
            let levels = config.grid_levels;
            let quantile = |t: &Truncation, i: usize| {
                truncated_normal_quantile(t.mu, t.sigma, t.lo, t.hi, (i as f64 + 0.5) / levels as f64)
            };
            let continuous: Vec<usize> = (0..config.variables.len())
                .filter(|&j| Some(j) != mode_index)
                .collect();
            let combos = levels.pow(continuous.len() as u32);
            let mut rows = Vec::with_capacity(config.rows_per_class);
            for slot in 0..codes.len().max(1) {
                for combo in 0..combos {
                    let mut row = vec![0.0; config.variables.len()];
                    if let Some(m) = mode_index {
                        row[m] = codes[slot];
                    }
                    let mut rest = combo;
                    for &j in continuous.iter().rev() {
                        let level = rest % levels;
                        rest /= levels;
                        row[j] = match &config.variables[j].draw {
                            Draw::Global(t) => quantile(t, level)?,
                            Draw::PerMode(table) => quantile(&table[slot], level)?,
                            Draw::Mode => unreachable!(),
                        };
                    }
                    rows.push(row);
                }
            }
            Ok(rows)
        }
    }
}

/// Generates `classes x rows_per_class` instances, class-major.
pub fn generate_equation_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let schema = config.schema();
    let base: Vec<Instance> = draw_base_rows(config)?
        .into_iter()
        .enumerate()
        .map(|(id, mut features)| {
            schema.conform(&mut features);
            let energy = config.equation.energy(&schema, &features)?;
            Ok(Instance {
                id,
                features,
                label: 0,
                variation_id: 0,
                energy: Some(energy),
            })
        })
        .collect::<Result<_>>()?;

    let per_class: Vec<Vec<Instance>> = config
        .variations
        .par_iter()
        .map(|spec| {
            base.iter()
                .map(|row| {
                    let mut inst = apply_variation(row, spec, &schema)?;
                    inst.energy = Some(config.equation.energy(&schema, &inst.features)?);
                    Ok(inst)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut instances: Vec<Instance> = per_class.into_iter().flatten().collect();
    for (id, inst) in instances.iter_mut().enumerate() {
        inst.id = id;
    }
    Ok(Dataset {
        meta: DatasetMeta {
            name: config.equation.name().to_string(),
            schema,
            class_names: (0..config.class_count()).map(|c| format!("variation_{c}")).collect(),
            config_hash: config.hash(),
            seed: config.seed,
        },
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn distance_schema() -> FeatureSchema {
        GeneratorConfig::builtin(Equation::Distance).schema()
    }

    #[test]
    fn energy_examples() {
        assert_eq!(base_energy_distance(2.0, 10.0, 2.0, 1.0).unwrap(), 10.0);
        assert_eq!(base_energy_distance(0.0, 7.0, 3.0, 0.4).unwrap(), 0.0);
        assert_eq!(base_energy_distance(1.0, 1.0, 1.0, 1.0).unwrap(), 1.0);
        assert!(matches!(base_energy_distance(1.0, 1.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert_eq!(base_energy_time(2.0, 30.0, 0.5), 30.0);
        assert_eq!(base_energy_time(0.0, 30.0, 0.5), 0.0);
        assert_eq!(base_energy_time(1.0, 1.0, 1.0), 1.0);
    }

    fn row(schema: &FeatureSchema, pairs: &[(&str, f64)]) -> Instance {
        let mut features = vec![1.0; schema.len()];
        for (name, v) in pairs {
            features[schema.index_of(name).unwrap()] = *v;
        }
        Instance {
            id: 0,
            features,
            label: 0,
            variation_id: 0,
            energy: None,
        }
    }

    #[test]
    fn variation_examples() {
        let schema = distance_schema();
        let td = schema.index_of("TD").unwrap();
        let to = schema.index_of("TO").unwrap();

        let spec = VariationSpec {
            class: 4,
            ops: vec![VariationOp::power("TD", 2.0)],
        };
        let out = apply_variation(&row(&schema, &[("TD", 3.0)]), &spec, &schema).unwrap();
        assert_eq!(out.features[td], 9.0);
        assert_eq!(out.label, 4);

        let base = row(&schema, &[("TD", 3.0)]);
        let out = apply_variation(&base, &VariationSpec { class: 0, ops: vec![] }, &schema).unwrap();
        assert_eq!(out.features, base.features);
        assert_eq!(out.label, 0);

        let spec = VariationSpec {
            class: 2,
            ops: vec![VariationOp::multiply("TO", 2.0), VariationOp::power("TO", 2.0)],
        };
        let out = apply_variation(&row(&schema, &[("TO", 3.0)]), &spec, &schema).unwrap();
        assert_eq!(out.features[to], 36.0);
    }

    #[test]
    fn variation_non_finite_is_an_error() {
        let schema = distance_schema();
        let spec = VariationSpec {
            class: 1,
            ops: vec![VariationOp::power("TD", -1.0)],
        };
        assert!(matches!(
            apply_variation(&row(&schema, &[("TD", 0.0)]), &spec, &schema),
            Err(Error::VariationDomain { .. })
        ));
    }

    #[test]
    fn desk_counts() {
        let cfg = GeneratorConfig::builtin(Equation::Time).with_rows_per_class(100);
        assert_eq!(cfg.class_count(), 7);
        assert_eq!(generate_equation_dataset(&cfg).unwrap().len(), 700);
        let cfg = GeneratorConfig::builtin(Equation::Distance).with_rows_per_class(30);
        assert_eq!(cfg.class_count(), 10);
        assert_eq!(generate_equation_dataset(&cfg).unwrap().len(), 300);
    }

    #[test]
    fn full_scale_counts_are_configured() {
        assert_eq!(GeneratorConfig::builtin(Equation::Time).rows_per_class * 7, 504_000);
        assert_eq!(GeneratorConfig::builtin(Equation::Distance).rows_per_class * 10, 2_600_000);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = GeneratorConfig::builtin(Equation::Distance).with_rows_per_class(50);
        let a = generate_equation_dataset(&cfg).unwrap();
        let b = generate_equation_dataset(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c = generate_equation_dataset(&cfg.clone().with_seed(cfg.seed + 1)).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn grid_mode() {
        let mut cfg = GeneratorConfig::builtin(Equation::Time);
        cfg.sampling = SamplingMode::Grid;
        cfg.grid_levels = 3;
        cfg.rows_per_class = 5 * 27;
        let ds = generate_equation_dataset(&cfg).unwrap();
        assert_eq!(ds.len(), 7 * 135);
        cfg.rows_per_class = 100;
        assert!(matches!(generate_equation_dataset(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = TIME_FULL.replacen("target = \"TT\"", "target = \"XX\"", 1);
        let err = GeneratorConfig::parse(&text, Path::new("t.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("t.toml") && msg.contains("line") && msg.contains("XX"), "{msg}");

        let err = GeneratorConfig::parse("equation = \"time\"\nrows_per_class = -3\n", Path::new("t.toml"))
            .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
