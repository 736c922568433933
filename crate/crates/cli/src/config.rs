//! Declarative run configuration.
//!
//! A whole experiment — data sources, factor sets, model list, hyperparameter
//! overrides, explanation setup, mapping setup — lives in one TOML file, so a
//! run is fully described by (config, seed). The schema:
//!
//! ```toml
//! [data]
//! samples = "samples.csv"        # label,<factor columns...>[,x,y]
//! grids_dir = "grids"            # optional; per-factor ASCII grids for mapping
//!
//! [[data.factor]]                # declare columns not in the built-in catalog
//! name = "x1"
//! kind = "continuous"            # or "categorical"
//! triggering = false
//! unit = ""
//!
//! [experiment]
//! models = ["fr", "iv", "woe", "lr", "svm", "gbt", "cnn", "lstm"]
//! seed = 42
//! test_fraction = 0.3
//! tune = []                      # models to grid-search instead of using defaults
//! out = "runs"                   # output root (not part of the run identity)
//!
//! [[experiment.factor_set]]
//! name = "all_19"
//! select = "all"                 # "all" | "triggering" | ["Slope", "TWI", ...]
//!
//! [binning]
//! classes = 8                    # quantile classes for continuous factors
//!
//! [explain]
//! methods = ["shapley", "lime", "deeplift"]
//! instances = 10                 # test rows to explain
//! background = 32                # train rows forming the background sample
//! permutations = 200             # permutations per sampled-Shapley call
//!
//! [map]
//! classes = 5
//! jenks_sample_cap = 10000       # max scores fed to the break optimizer
//!
//! [models.gbt]                   # any subset of fields; omitted ones keep
//! n_estimators = 150             # the built-in defaults
//! ```
//!
//! [`validate`] checks the whole file and reports *every* violation it can
//! find, not just the first.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use susmap_core::data::{
    factor_catalog, triggering_factor_names, FactorKind, FactorMeta, RESERVED_COLUMNS,
};
use susmap_core::learners::{
    GbtConfig, KernelSpec, LogisticConfig, Penalty, SvmConfig,
};
use susmap_core::neural::{CnnConfig, LstmConfig};

/// Every model name the pipeline understands, in report order: the three
/// additive index models, then the machine-learning family.
pub const MODEL_NAMES: [&str; 8] = ["fr", "iv", "woe", "lr", "svm", "gbt", "cnn", "lstm"];

/// Explanation method names accepted in `[explain].methods`.
pub const METHOD_NAMES: [&str; 3] = ["shapley", "lime", "deeplift"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub data: DataSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub models: ModelOverrides,
    #[serde(default)]
    pub binning: BinningSection,
    #[serde(default)]
    pub explain: ExplainSection,
    #[serde(default)]
    pub map: MapSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Labeled sample CSV: a `label` column, one column per factor, and
    /// optional `x`/`y` coordinate columns.
    pub samples: PathBuf,
    /// Directory of per-factor ESRI ASCII grids named after the factor
    /// (lowercased, non-alphanumerics folded to `_`, extension `.asc`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids_dir: Option<PathBuf>,
    /// Columns beyond the built-in catalog.
    #[serde(default, rename = "factor", skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<CustomFactor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomFactor {
    pub name: String,
    /// `"continuous"` or `"categorical"`.
    pub kind: String,
    #[serde(default)]
    pub triggering: bool,
    #[serde(default)]
    pub unit: String,
}

impl CustomFactor {
    /// `None` when `kind` is not a known kind name.
    pub fn to_meta(&self) -> Option<FactorMeta> {
        let kind = match self.kind.as_str() {
            "continuous" => FactorKind::Continuous,
            "categorical" => FactorKind::Categorical,
            _ => return None,
        };
        Some(FactorMeta {
            name: self.name.clone(),
            kind,
            triggering: self.triggering,
            unit: self.unit.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub models: Vec<String>,
    #[serde(default = "default_factor_sets", rename = "factor_set")]
    pub factor_sets: Vec<FactorSetSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Models whose hyperparameters are grid-searched by cross-validation
    /// instead of taken from the defaults/overrides.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tune: Vec<String>,
    /// Output root directory. Deliberately excluded from the serialized run
    /// identity: the same experiment written elsewhere is the same run.
    #[serde(default = "default_out", skip_serializing)]
    pub out: PathBuf,
}

fn default_factor_sets() -> Vec<FactorSetSpec> {
    vec![FactorSetSpec {
        name: "all".into(),
        select: FactorSelect::Keyword("all".into()),
    }]
}

fn default_test_fraction() -> f64 {
    0.3
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSetSpec {
    pub name: String,
    pub select: FactorSelect,
}

/// Factor-set selector: the keyword `"all"`, the keyword `"triggering"`
/// (the nine catalog factors flagged as triggering), or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorSelect {
    Keyword(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    #[serde(default)]
    pub lr: LrParams,
    #[serde(default)]
    pub svm: SvmParams,
    #[serde(default)]
    pub gbt: GbtParams,
    #[serde(default)]
    pub cnn: CnnParams,
    #[serde(default)]
    pub lstm: LstmParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrParams {
    pub c: Option<f64>,
    /// `"l1"` or `"l2"`.
    pub penalty: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmParams {
    pub c: Option<f64>,
    /// `"linear"`, `"rbf"`, or `"poly"`.
    pub kernel: Option<String>,
    /// RBF width; defaults to the median pairwise distance heuristic.
    pub sigma: Option<f64>,
    /// Polynomial degree (only with `kernel = "poly"`).
    pub degree: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbtParams {
    pub n_estimators: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_depth: Option<usize>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnParams {
    pub filters: Option<usize>,
    pub kernel_width: Option<usize>,
    pub pool_width: Option<usize>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmParams {
    pub units: Option<usize>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinningSection {
    /// Quantile class count for continuous factors; categorical factors get
    /// one class per code regardless.
    pub classes: usize,
}

impl Default for BinningSection {
    fn default() -> Self {
        BinningSection { classes: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub methods: Vec<String>,
    pub instances: usize,
    pub background: usize,
    pub permutations: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            methods: vec!["shapley".into(), "lime".into(), "deeplift".into()],
            instances: 10,
            background: 32,
            permutations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    pub classes: usize,
    pub jenks_sample_cap: usize,
}

impl Default for MapSection {
    fn default() -> Self {
        MapSection {
            classes: 5,
            jenks_sample_cap: 10_000,
        }
    }
}

impl Config {
    /// Materialized logistic hyperparameters (defaults + overrides).
    pub fn logistic_config(&self) -> anyhow::Result<LogisticConfig> {
        let mut c = LogisticConfig::default();
        if let Some(v) = self.models.lr.c {
            c.c = v;
        }
        if let Some(p) = &self.models.lr.penalty {
            c.penalty = match p.as_str() {
                "l1" => Penalty::L1,
                "l2" => Penalty::L2,
                other => anyhow::bail!("models.lr.penalty must be \"l1\" or \"l2\", got \"{other}\""),
            };
        }
        Ok(c)
    }

    pub fn svm_config(&self) -> anyhow::Result<SvmConfig> {
        let mut c = SvmConfig::default();
        if let Some(v) = self.models.svm.c {
            c.c = v;
        }
        match self.models.svm.kernel.as_deref() {
            None => {
                if let Some(s) = self.models.svm.sigma {
                    c.kernel = KernelSpec::Rbf { sigma: Some(s) };
                }
            }
            Some("linear") => c.kernel = KernelSpec::Linear,
            Some("rbf") => c.kernel = KernelSpec::Rbf { sigma: self.models.svm.sigma },
            Some("poly") => {
                c.kernel = KernelSpec::Poly {
                    degree: self.models.svm.degree.unwrap_or(2),
                    coef0: 1.0,
                }
            }
            Some(other) => {
                anyhow::bail!("models.svm.kernel must be \"linear\", \"rbf\", or \"poly\", got \"{other}\"")
            }
        }
        Ok(c)
    }

    pub fn gbt_config(&self) -> GbtConfig {
        let mut c = GbtConfig::default();
        let o = &self.models.gbt;
        if let Some(v) = o.n_estimators {
            c.n_estimators = v;
        }
        if let Some(v) = o.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = o.max_depth {
            c.max_depth = v;
        }
        if let Some(v) = o.gamma {
            c.gamma = v;
        }
        if let Some(v) = o.lambda {
            c.lambda = v;
        }
        c
    }

    pub fn cnn_config(&self, seed: u64) -> CnnConfig {
        let mut c = CnnConfig { seed, ..CnnConfig::default() };
        let o = &self.models.cnn;
        if let Some(v) = o.filters {
            c.filters = v;
        }
        if let Some(v) = o.kernel_width {
            c.kernel_width = v;
        }
        if let Some(v) = o.pool_width {
            c.pool_width = v;
        }
        if let Some(v) = o.dropout {
            c.dropout = v;
        }
        if let Some(v) = o.epochs {
            c.epochs = v;
        }
        if let Some(v) = o.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = o.learning_rate {
            c.learning_rate = v;
        }
        c
    }

    pub fn lstm_config(&self, seed: u64) -> LstmConfig {
        let mut c = LstmConfig { seed, ..LstmConfig::default() };
        let o = &self.models.lstm;
        if let Some(v) = o.units {
            c.units = v;
        }
        if let Some(v) = o.dropout {
            c.dropout = v;
        }
        if let Some(v) = o.epochs {
            c.epochs = v;
        }
        if let Some(v) = o.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = o.learning_rate {
            c.learning_rate = v;
        }
        c
    }
}

/// Parses a config file. Syntax errors and unknown keys fail here; semantic
/// problems are the domain of [`validate`].
pub fn load_config(path: impl AsRef<Path>) -> anyhow::Result<Config> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let config: Config = toml::from_str(&text)
        .with_context(|| format!("cannot parse config file {}", path.display()))?;
    Ok(config)
}

/// Name lookup over the built-in catalog plus any custom declarations
/// (custom entries shadow catalog entries of the same name).
fn known_factors(custom: &[CustomFactor]) -> BTreeMap<String, FactorMeta> {
    let mut map = BTreeMap::new();
    for meta in factor_catalog() {
        map.insert(meta.name.clone(), meta);
    }
    for c in custom {
        if let Some(meta) = c.to_meta() {
            map.insert(meta.name.clone(), meta);
        }
    }
    map
}

/// Factor columns of a sample CSV, in file order: the header minus the
/// reserved `label`/`x`/`y` columns.
pub fn read_factor_columns(samples: &Path) -> anyhow::Result<Vec<String>> {
    let mut reader = csv::Reader::from_path(samples)
        .with_context(|| format!("cannot open samples file {}", samples.display()))?;
    let headers = reader
        .headers()
        .with_context(|| format!("cannot read header of {}", samples.display()))?;
    Ok(headers
        .iter()
        .filter(|h| !RESERVED_COLUMNS.contains(h))
        .map(str::to_string)
        .collect())
}

/// Builds the factor schema for a samples file: every non-reserved column,
/// in file order, resolved against the catalog and custom declarations.
pub fn resolve_schema(samples: &Path, custom: &[CustomFactor]) -> anyhow::Result<Vec<FactorMeta>> {
    let known = known_factors(custom);
    let mut schema = Vec::new();
    for column in read_factor_columns(samples)? {
        let meta = known.get(&column).ok_or_else(|| {
            anyhow::anyhow!(
                "samples column \"{column}\" is neither a catalog factor nor declared \
                 under [[data.factor]]"
            )
        })?;
        schema.push(meta.clone());
    }
    if schema.is_empty() {
        anyhow::bail!(
            "samples file {} has no factor columns besides the reserved ones",
            samples.display()
        );
    }
    Ok(schema)
}

/// Resolves one factor-set selector against a schema. The `"triggering"`
/// keyword requires every catalog triggering factor to be present and
/// resolves to exactly those, in catalog order.
pub fn resolve_factor_set(
    spec: &FactorSetSpec,
    schema: &[FactorMeta],
) -> anyhow::Result<Vec<String>> {
    let present: Vec<&str> = schema.iter().map(|m| m.name.as_str()).collect();
    match &spec.select {
        FactorSelect::Keyword(k) if k == "all" => {
            Ok(present.iter().map(|s| s.to_string()).collect())
        }
        FactorSelect::Keyword(k) if k == "triggering" => {
            let wanted = triggering_factor_names();
            let missing: Vec<&String> =
                wanted.iter().filter(|w| !present.contains(&w.as_str())).collect();
            if !missing.is_empty() {
                anyhow::bail!(
                    "factor set \"{}\": the triggering selector needs {}, missing from the data",
                    spec.name,
                    missing.iter().map(|m| format!("\"{m}\"")).collect::<Vec<_>>().join(", ")
                );
            }
            Ok(wanted)
        }
        FactorSelect::Keyword(k) => {
            anyhow::bail!(
                "factor set \"{}\": unknown selector keyword \"{k}\" (use \"all\", \
                 \"triggering\", or an explicit list)",
                spec.name
            )
        }
        FactorSelect::List(names) => {
            if names.is_empty() {
                anyhow::bail!("factor set \"{}\": empty factor list", spec.name);
            }
            if let Some(dup) =
                names.iter().enumerate().find(|(i, n)| names[..*i].contains(n)).map(|(_, n)| n)
            {
                anyhow::bail!("factor set \"{}\": \"{dup}\" is listed twice", spec.name);
            }
            let missing: Vec<&String> =
                names.iter().filter(|n| !present.contains(&n.as_str())).collect();
            if !missing.is_empty() {
                anyhow::bail!(
                    "factor set \"{}\": {} not present in the data",
                    spec.name,
                    missing.iter().map(|m| format!("\"{m}\"")).collect::<Vec<_>>().join(", ")
                );
            }
            Ok(names.clone())
        }
    }
}

/// Semantic validation: returns one line per violation, empty when clean.
/// Checks that need the samples file degrade gracefully — an unreadable file
/// is itself a single diagnostic rather than a cascade.
pub fn validate(config: &Config) -> Vec<String> {
    let mut problems = Vec::new();

    // Model list.
    if config.experiment.models.is_empty() {
        problems.push(format!(
            "experiment.models is empty; list at least one of {}",
            MODEL_NAMES.join(", ")
        ));
    }
    let mut seen_models = Vec::new();
    for name in &config.experiment.models {
        if !MODEL_NAMES.contains(&name.as_str()) {
            problems.push(format!(
                "unknown model \"{name}\" (known models: {})",
                MODEL_NAMES.join(", ")
            ));
        } else if seen_models.contains(&name) {
            problems.push(format!("model \"{name}\" is listed more than once"));
        }
        seen_models.push(name);
    }
    for name in &config.experiment.tune {
        if !["lr", "svm", "gbt", "cnn", "lstm"].contains(&name.as_str()) {
            problems.push(format!(
                "experiment.tune entry \"{name}\" is not a tunable model (lr, svm, gbt, cnn, lstm)"
            ));
        } else if !config.experiment.models.contains(name) {
            problems.push(format!(
                "experiment.tune lists \"{name}\" which is not in experiment.models"
            ));
        }
    }

    if !(config.experiment.test_fraction > 0.0 && config.experiment.test_fraction < 1.0) {
        problems.push(format!(
            "experiment.test_fraction must lie strictly between 0 and 1, got {}",
            config.experiment.test_fraction
        ));
    }

    // Custom factor declarations.
    let mut custom_names = Vec::new();
    for c in &config.data.factors {
        if c.to_meta().is_none() {
            problems.push(format!(
                "data.factor \"{}\": kind must be \"continuous\" or \"categorical\", got \"{}\"",
                c.name, c.kind
            ));
        }
        if RESERVED_COLUMNS.contains(&c.name.as_str()) {
            problems.push(format!(
                "data.factor \"{}\" collides with a reserved column name",
                c.name
            ));
        }
        if custom_names.contains(&&c.name) {
            problems.push(format!("data.factor \"{}\" is declared more than once", c.name));
        }
        custom_names.push(&c.name);
    }

    // Factor sets, resolved against the samples header when it is readable.
    let schema = resolve_schema(&config.data.samples, &config.data.factors);
    if config.experiment.factor_sets.is_empty() {
        problems.push("experiment has no [[experiment.factor_set]] entries".into());
    }
    let mut set_names = Vec::new();
    for spec in &config.experiment.factor_sets {
        if spec.name.is_empty() {
            problems.push("a factor set has an empty name".into());
        }
        if set_names.contains(&&spec.name) {
            problems.push(format!("factor set \"{}\" is defined more than once", spec.name));
        }
        set_names.push(&spec.name);
        match &schema {
            Ok(schema) => {
                if let Err(e) = resolve_factor_set(spec, schema) {
                    problems.push(format!("{e:#}"));
                }
            }
            Err(_) => {
                // Without a readable samples file only keyword sanity is checkable.
                if let FactorSelect::Keyword(k) = &spec.select {
                    if k != "all" && k != "triggering" {
                        problems.push(format!(
                            "factor set \"{}\": unknown selector keyword \"{k}\" (use \"all\", \
                             \"triggering\", or an explicit list)",
                            spec.name
                        ));
                    }
                }
                if let FactorSelect::List(names) = &spec.select {
                    if names.is_empty() {
                        problems.push(format!("factor set \"{}\": empty factor list", spec.name));
                    }
                }
            }
        }
    }
    if let Err(e) = &schema {
        problems.push(format!("{e:#}"));
    }

    // Grid directory, when declared.
    if let Some(dir) = &config.data.grids_dir {
        if !dir.is_dir() {
            problems.push(format!("data.grids_dir {} is not a directory", dir.display()));
        }
    }

    // Explanation setup.
    for m in &config.explain.methods {
        if !METHOD_NAMES.contains(&m.as_str()) {
            problems.push(format!(
                "unknown explanation method \"{m}\" (known methods: {})",
                METHOD_NAMES.join(", ")
            ));
        }
    }
    if config.explain.instances == 0 {
        problems.push("explain.instances must be at least 1".into());
    }
    if config.explain.background == 0 {
        problems.push("explain.background must be at least 1".into());
    }
    if config.explain.permutations == 0 {
        problems.push("explain.permutations must be at least 1".into());
    }

    // Binning and mapping.
    if config.binning.classes < 2 {
        problems.push(format!(
            "binning.classes must be at least 2, got {}",
            config.binning.classes
        ));
    }
    if config.map.classes < 2 {
        problems.push(format!("map.classes must be at least 2, got {}", config.map.classes));
    }
    if config.map.jenks_sample_cap < config.map.classes {
        problems.push(format!(
            "map.jenks_sample_cap ({}) is smaller than map.classes ({})",
            config.map.jenks_sample_cap, config.map.classes
        ));
    }

    // Hyperparameter overrides that carry constrained string fields.
    if let Err(e) = config.logistic_config() {
        problems.push(format!("{e:#}"));
    }
    if let Err(e) = config.svm_config() {
        problems.push(format!("{e:#}"));
    }

    problems
}
