//! Stage orchestration: turns a parsed [`Config`] into a run directory of
//! artifacts.
//!
//! A run directory is named by the FNV-1a hash of the serialized effective
//! configuration (config file + command-line overrides), so distinct
//! experiments land in distinct directories and re-running the same one is a
//! no-op: every stage checks for its artifacts before doing work, all
//! randomness flows from the configured seed, and nothing records wall-clock
//! time — two runs of the same configuration are byte-identical.
//!
//! Stages and their artifacts (paths relative to the run directory):
//!
//! | stage      | artifacts                                                       |
//! |------------|-----------------------------------------------------------------|
//! | (always)   | `manifest.toml`                                                 |
//! | `diagnose` | `diagnostics/vif_<set>.csv`, `diagnostics/ols_<set>.csv`        |
//! | `train`    | `models/<model>_<set>.json`, `weights/weights_<set>.csv`,       |
//! |            | `models/tuning_<model>_<set>.csv` (tuned models only)           |
//! | `evaluate` | `metrics.csv` (one row per model × factor set)                  |
//! | `explain`  | `explain/attributions_<set>.csv`, `explain/importance_<set>.csv`,|
//! |            | `explain/consistency_<set>.csv` (two or more combinations)      |
//! | `map`      | `map/susceptibility_<model>_<set>.asc`, `map/classes_…​.asc`,    |
//! |            | `map/legend_…​.csv`, `map/density_…​.csv` (needs coordinates)     |
//!
//! A failing stage leaves a `FAILED` marker naming the stage and cause, so a
//! directory holding partial output is recognizable; the marker is removed
//! by the next fully successful invocation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use susmap_core::attribution::{
    background_mean, deeplift, global_importance, lime_explain, shapley_sampled,
    write_attributions_csv, Attribution, AttributionRecord, GlobalImportance, LimeConfig, Scorer,
    TopKList,
};
use susmap_core::bivariate::{compute_class_counts, ClassCounts, LsiMethod, LsiModel, WeightTable};
use susmap_core::data::{
    bin_factor, load_factor_table, split_train_test, standardize, BinScheme, ClassBinning,
    FactorKind, FactorTable,
};
use susmap_core::evaluation::{
    confusion_from_scores, confusion_metrics, density_by_class, roc_auc, write_metrics_csv,
    MetricsRow,
};
use susmap_core::learners::{
    default_grid, grid_search, train_candidate, CandidateConfig, ModelBundle, ModelKind,
};
use susmap_core::mapping::{classify, classify_grid, jenks_breaks, legend, level_names};
use susmap_core::raster::{read_ascii_grid, write_ascii_grid, RasterGrid};

use crate::config::{resolve_factor_set, resolve_schema, Config};

/// Command-line adjustments applied on top of the config file before the
/// run identity is computed.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub factor_set: Option<String>,
    pub model: Option<String>,
    pub method: Option<String>,
}

/// A fully resolved run: effective config, its serialized identity, and the
/// directory everything is written to.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: Config,
    pub run_dir: PathBuf,
    pub manifest: String,
}

impl RunContext {
    pub fn new(mut config: Config, overrides: &Overrides) -> anyhow::Result<Self> {
        if let Some(seed) = overrides.seed {
            config.experiment.seed = seed;
        }
        if let Some(out) = &overrides.out {
            config.experiment.out = out.clone();
        }
        if let Some(name) = &overrides.factor_set {
            if !config.experiment.factor_sets.iter().any(|s| &s.name == name) {
                bail!("--factor-set \"{name}\" is not defined in the config");
            }
            config.experiment.factor_sets.retain(|s| &s.name == name);
        }
        if let Some(name) = &overrides.model {
            if !config.experiment.models.contains(name) {
                bail!("--model \"{name}\" is not listed in the config");
            }
            config.experiment.models.retain(|m| m == name);
            config.experiment.tune.retain(|m| m == name);
        }
        if let Some(name) = &overrides.method {
            if !config.explain.methods.contains(name) {
                bail!("--method \"{name}\" is not listed in the config");
            }
            config.explain.methods.retain(|m| m == name);
        }
        let manifest =
            toml::to_string_pretty(&config).context("cannot serialize the effective config")?;
        let run_dir = config
            .experiment
            .out
            .join(format!("run-{:016x}", fnv1a64(manifest.as_bytes())));
        Ok(RunContext { config, run_dir, manifest })
    }

    fn seed(&self) -> u64 {
        self.config.experiment.seed
    }
}

/// 64-bit FNV-1a: tiny, stable, and plenty for naming run directories.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Stable sub-seed for one named use of the run seed, so stages don't share
/// RNG streams.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    fnv1a64(format!("{base}:{tag}").as_bytes())
}

/// File-name-safe rendering of a factor or set name: lowercase,
/// non-alphanumerics folded to `_`.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Diagnose,
    Train,
    Evaluate,
    Explain,
    Map,
    Run,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Diagnose => "diagnose",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
            Stage::Map => "map",
            Stage::Run => "run",
        }
    }
}

/// Runs one stage (with its prerequisites) into the run directory. On
/// failure a `FAILED` marker naming the stage is left next to whatever
/// partial output exists.
pub fn execute(ctx: &RunContext, stage: Stage) -> anyhow::Result<()> {
    fs::create_dir_all(&ctx.run_dir)
        .with_context(|| format!("cannot create run directory {}", ctx.run_dir.display()))?;
    fs::write(ctx.run_dir.join("manifest.toml"), &ctx.manifest)
        .context("cannot write manifest.toml")?;
    let result = dispatch(ctx, stage);
    let marker = ctx.run_dir.join("FAILED");
    match &result {
        Ok(()) => {
            let _ = fs::remove_file(&marker);
        }
        Err(e) => {
            let _ = fs::write(&marker, format!("{e:#}\n"));
        }
    }
    result
}

fn dispatch(ctx: &RunContext, stage: Stage) -> anyhow::Result<()> {
    let prepared = prepare(ctx).context("stage ingest")?;
    match stage {
        Stage::Diagnose => ensure_diagnostics(ctx, &prepared).context("stage diagnose"),
        Stage::Train => ensure_models(ctx, &prepared).map(|_| ()).context("stage train"),
        Stage::Evaluate => {
            let models = ensure_models(ctx, &prepared).context("stage train")?;
            ensure_metrics(ctx, &prepared, &models).context("stage evaluate")
        }
        Stage::Explain => {
            let models = ensure_models(ctx, &prepared).context("stage train")?;
            ensure_explain(ctx, &prepared, &models).context("stage explain")
        }
        Stage::Map => {
            let models = ensure_models(ctx, &prepared).context("stage train")?;
            ensure_map(ctx, &prepared, &models, true).context("stage map")
        }
        Stage::Run => {
            ensure_diagnostics(ctx, &prepared).context("stage diagnose")?;
            let models = ensure_models(ctx, &prepared).context("stage train")?;
            ensure_metrics(ctx, &prepared, &models).context("stage evaluate")?;
            ensure_explain(ctx, &prepared, &models).context("stage explain")?;
            // Mapping is part of a full run only when grids are configured.
            ensure_map(ctx, &prepared, &models, false).context("stage map")
        }
    }
}

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

/// One resolved factor set: declared name, file-name tag, member factors.
#[derive(Debug, Clone)]
pub struct ResolvedSet {
    pub name: String,
    pub tag: String,
    pub factors: Vec<String>,
}

/// The loaded sample table plus every resolved factor set.
#[derive(Debug)]
pub struct Prepared {
    pub table: FactorTable,
    pub sets: Vec<ResolvedSet>,
}

fn prepare(ctx: &RunContext) -> anyhow::Result<Prepared> {
    let schema = resolve_schema(&ctx.config.data.samples, &ctx.config.data.factors)?;
    let table = load_factor_table(&ctx.config.data.samples, &schema)
        .with_context(|| format!("cannot load {}", ctx.config.data.samples.display()))?;
    if table.labels().is_none() {
        bail!(
            "samples file {} has no \"label\" column; the pipeline needs labeled data",
            ctx.config.data.samples.display()
        );
    }
    let mut sets = Vec::new();
    for spec in &ctx.config.experiment.factor_sets {
        let mut factors = resolve_factor_set(spec, &schema)?;
        // Selection preserves table order, so keep the resolved list in the
        // same order — downstream φ indices and grid stacking rely on it.
        factors.sort_by_key(|name| schema.iter().position(|m| &m.name == name));
        sets.push(ResolvedSet {
            name: spec.name.clone(),
            tag: sanitize(&spec.name),
            factors,
        });
    }
    Ok(Prepared { table, sets })
}

/// Train/test split of one factor set. Row membership depends only on the
/// labels and the seed, so every factor set splits the samples identically —
/// factor-set comparisons see the same held-out rows.
fn split_set(
    ctx: &RunContext,
    prepared: &Prepared,
    set: &ResolvedSet,
) -> anyhow::Result<(FactorTable, FactorTable)> {
    let selected = prepared.table.select_factors(&set.factors)?;
    Ok(split_train_test(&selected, ctx.config.experiment.test_fraction, ctx.seed())?)
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

fn ensure_diagnostics(ctx: &RunContext, prepared: &Prepared) -> anyhow::Result<()> {
    let dir = ctx.run_dir.join("diagnostics");
    for set in &prepared.sets {
        let vif_path = dir.join(format!("vif_{}.csv", set.tag));
        let ols_path = dir.join(format!("ols_{}.csv", set.tag));
        if vif_path.exists() && ols_path.exists() {
            continue;
        }
        fs::create_dir_all(&dir)?;
        let selected = prepared.table.select_factors(&set.factors)?;
        // A single regressor has nothing to be collinear with.
        if set.factors.len() >= 2 {
            let entries = susmap_core::diagnostics::vif(&selected)
                .with_context(|| format!("collinearity screen for factor set \"{}\"", set.name))?;
            susmap_core::diagnostics::write_vif_csv(&entries, &vif_path)?;
        }
        let summary = susmap_core::diagnostics::ols_regression(&selected)
            .with_context(|| format!("significance screen for factor set \"{}\"", set.name))?;
        susmap_core::diagnostics::write_ols_csv(&summary, &ols_path)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

const INDEX_FORMAT: &str = "susmap-index-model";

/// A fitted additive-index model plus the training-score range used to
/// normalize its sums onto a probability-like [0, 1] scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexBundle {
    format: String,
    pub name: String,
    pub model: LsiModel,
    pub train_min: f64,
    pub train_max: f64,
}

impl IndexBundle {
    /// Normalized score of a raw-space sample ordered like the model's
    /// factors. Min-max scaling is affine, so ranks are untouched; values
    /// outside the training range land outside [0, 1] rather than clamping.
    pub fn score_raw(&self, sample: &[f64]) -> f64 {
        (self.model.scorer().score(sample) - self.train_min) / (self.train_max - self.train_min)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let bundle: IndexBundle = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse model file {}", path.display()))?;
        if bundle.format != INDEX_FORMAT {
            bail!("{} is not an index-model file", path.display());
        }
        Ok(bundle)
    }
}

/// Any trained model the pipeline can score with, in raw factor space.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Index(IndexBundle),
    Ml(ModelBundle),
}

impl AnyModel {
    pub fn n_factors(&self) -> usize {
        match self {
            AnyModel::Index(b) => b.model.factor_names().len(),
            AnyModel::Ml(b) => b.factor_names.len(),
        }
    }

    /// Probability-like score of one raw-space sample.
    pub fn score(&self, sample: &[f64]) -> f64 {
        match self {
            AnyModel::Index(b) => b.score_raw(sample),
            AnyModel::Ml(b) => b.predict_raw(sample),
        }
    }
}

impl Scorer for AnyModel {
    fn n_factors(&self) -> usize {
        self.n_factors()
    }

    fn score(&self, sample: &[f64]) -> f64 {
        self.score(sample)
    }
}

/// Per-factor quantile (continuous) or one-class-per-code (categorical)
/// binnings and the matching landslide/pixel tallies on the training rows.
fn bin_and_count(
    train: &FactorTable,
    classes: usize,
) -> anyhow::Result<(Vec<ClassCounts>, Vec<ClassBinning>)> {
    let labels = train.labels().context("binning needs labeled rows")?.to_vec();
    let mut counts = Vec::new();
    let mut binnings = Vec::new();
    for (j, meta) in train.metas().iter().enumerate() {
        let scheme = match meta.kind {
            FactorKind::Categorical => BinScheme::Categorical,
            FactorKind::Continuous => BinScheme::Quantile(classes),
        };
        let values = train.column(j);
        let binning = bin_factor(&meta.name, &values, &scheme)
            .with_context(|| format!("cannot bin factor \"{}\"", meta.name))?;
        counts.push(compute_class_counts(&values, &labels, &binning)?);
        binnings.push(binning);
    }
    Ok((counts, binnings))
}

fn index_method(name: &str) -> Option<LsiMethod> {
    match name {
        "fr" => Some(LsiMethod::FrequencyRatio),
        "iv" => Some(LsiMethod::InformationValue),
        "woe" => Some(LsiMethod::WoeStudentized),
        _ => None,
    }
}

fn fit_index(
    name: &str,
    counts: &[ClassCounts],
    binnings: &[ClassBinning],
    train: &FactorTable,
) -> anyhow::Result<IndexBundle> {
    let method = index_method(name).context("not an index model")?;
    let model = LsiModel::fit(counts, binnings, method)?;
    let scorer = model.scorer();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for r in 0..train.n_rows() {
        let s = scorer.score(train.row(r));
        min = min.min(s);
        max = max.max(s);
    }
    if !(max > min) {
        bail!("the {name} index is constant on the training data; nothing to rank");
    }
    Ok(IndexBundle {
        format: INDEX_FORMAT.into(),
        name: name.into(),
        model,
        train_min: min,
        train_max: max,
    })
}

fn wired_candidate(ctx: &RunContext, kind: ModelKind, seed: u64) -> anyhow::Result<CandidateConfig> {
    Ok(match kind {
        ModelKind::Lr => CandidateConfig::Logistic(ctx.config.logistic_config()?),
        ModelKind::Svm => CandidateConfig::Svm(ctx.config.svm_config()?),
        ModelKind::Gbt => CandidateConfig::Gbt(ctx.config.gbt_config()),
        ModelKind::Cnn => CandidateConfig::Cnn(ctx.config.cnn_config(seed)),
        ModelKind::Lstm => CandidateConfig::Lstm(ctx.config.lstm_config(seed)),
    })
}

type ModelMap = BTreeMap<(String, String), AnyModel>;

/// Trains (or reloads) every requested (model, factor set) cell, writing the
/// model files, the per-set weight table, and any grid-search traces.
fn ensure_models(ctx: &RunContext, prepared: &Prepared) -> anyhow::Result<ModelMap> {
    let model_dir = ctx.run_dir.join("models");
    fs::create_dir_all(&model_dir)?;
    let mut out = ModelMap::new();

    for set in &prepared.sets {
        let (train, _) = split_set(ctx, prepared, set)?;

        let index_models: Vec<&String> = ctx
            .config
            .experiment
            .models
            .iter()
            .filter(|m| index_method(m).is_some())
            .collect();
        if !index_models.is_empty() {
            let (counts, binnings) = bin_and_count(&train, ctx.config.binning.classes)
                .with_context(|| format!("factor set \"{}\"", set.name))?;
            let weights_dir = ctx.run_dir.join("weights");
            fs::create_dir_all(&weights_dir)?;
            let weights_path = weights_dir.join(format!("weights_{}.csv", set.tag));
            if !weights_path.exists() {
                WeightTable::from_counts(&counts)?.write_csv(&weights_path)?;
            }
            for name in index_models {
                let path = model_dir.join(format!("{}_{}.json", name, set.tag));
                let bundle = if path.exists() {
                    IndexBundle::load(&path)?
                } else {
                    let bundle = fit_index(name, &counts, &binnings, &train)
                        .with_context(|| format!("cannot fit {name} on \"{}\"", set.name))?;
                    bundle.save(&path)?;
                    bundle
                };
                out.insert((name.clone(), set.tag.clone()), AnyModel::Index(bundle));
            }
        }

        let ml_models: Vec<ModelKind> = ctx
            .config
            .experiment
            .models
            .iter()
            .filter(|m| index_method(m).is_none())
            .map(|m| ModelKind::parse(m))
            .collect::<Result<_, _>>()?;
        if ml_models.is_empty() {
            continue;
        }
        let (train_scaled, scaler) = standardize(&train)
            .with_context(|| format!("cannot standardize factor set \"{}\"", set.name))?;
        for kind in ml_models {
            let name = kind.as_str();
            let path = model_dir.join(format!("{}_{}.json", name, set.tag));
            let bundle = if path.exists() {
                ModelBundle::load(&path)?
            } else {
                let seed = derive_seed(ctx.seed(), &format!("train:{}:{}", name, set.name));
                let model = if ctx.config.experiment.tune.iter().any(|t| t == name) {
                    let report = grid_search(&train_scaled, &default_grid(kind), 5, seed)
                        .with_context(|| format!("grid search for {name} on \"{}\"", set.name))?;
                    write_tuning_csv(
                        &report,
                        &model_dir.join(format!("tuning_{}_{}.csv", name, set.tag)),
                    )?;
                    train_candidate(&train_scaled, &report.best().config)?
                } else {
                    train_candidate(&train_scaled, &wired_candidate(ctx, kind, seed)?)
                        .with_context(|| format!("cannot train {name} on \"{}\"", set.name))?
                };
                let bundle =
                    ModelBundle::new(train.factor_names(), Some(scaler.clone()), model);
                bundle.save(&path)?;
                bundle
            };
            out.insert((name.to_string(), set.tag.clone()), AnyModel::Ml(bundle));
        }
    }
    Ok(out)
}

fn write_tuning_csv(
    report: &susmap_core::learners::SearchReport,
    path: &Path,
) -> anyhow::Result<()> {
    let mut text = String::from("candidate,mean_auc,best\n");
    for (i, point) in report.points.iter().enumerate() {
        let _ = writeln!(
            text,
            "\"{}\",{},{}",
            point.config.describe(),
            point.mean_auc,
            if i == report.best_index { 1 } else { 0 }
        );
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

fn ensure_metrics(ctx: &RunContext, prepared: &Prepared, models: &ModelMap) -> anyhow::Result<()> {
    let path = ctx.run_dir.join("metrics.csv");
    if path.exists() {
        return Ok(());
    }
    let mut rows = Vec::new();
    for set in &prepared.sets {
        let (_, test) = split_set(ctx, prepared, set)?;
        let labels = test.labels().context("test rows lost their labels")?.to_vec();
        for name in &ctx.config.experiment.models {
            let model = models
                .get(&(name.clone(), set.tag.clone()))
                .with_context(|| format!("no trained {name} for factor set \"{}\"", set.name))?;
            let scores: Vec<f64> = (0..test.n_rows()).map(|r| model.score(test.row(r))).collect();
            let counts = confusion_from_scores(&scores, &labels, 0.5)?;
            rows.push(MetricsRow {
                model: name.clone(),
                factors: set.name.clone(),
                metrics: confusion_metrics(&counts),
                auc: Some(roc_auc(&scores, &labels)?),
            });
        }
    }
    write_metrics_csv(&rows, &path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Explanation
// ---------------------------------------------------------------------------

fn method_applies(model: &str, method: &str) -> bool {
    match method {
        "deeplift" => model == "cnn" || model == "lstm",
        _ => true,
    }
}

fn explain_one(
    ctx: &RunContext,
    set: &ResolvedSet,
    model: &AnyModel,
    model_name: &str,
    method: &str,
    x: &[f64],
    background: &FactorTable,
    instance: usize,
) -> anyhow::Result<Attribution> {
    let seed_tag = format!("explain:{}:{}:{}:{}", set.name, model_name, method, instance);
    let seed = derive_seed(ctx.seed(), &seed_tag);
    Ok(match method {
        "shapley" => {
            shapley_sampled(model, background, x, ctx.config.explain.permutations, seed)?
        }
        "lime" => {
            let config = LimeConfig::default_for(model.n_factors());
            lime_explain(model, x, &config, seed)?
        }
        "deeplift" => {
            let AnyModel::Ml(bundle) = model else {
                bail!("reference-difference attribution needs a neural model, got {model_name}");
            };
            let scaler = bundle
                .scaler
                .as_ref()
                .context("neural bundles always carry their scaler")?;
            let x_scaled = scaler.transform_sample(x);
            let scaled_bg = scaler.transform_table(background)?;
            let reference = background_mean(&scaled_bg);
            deeplift(&bundle.model, &x_scaled, &reference)?
        }
        other => bail!("unknown explanation method \"{other}\""),
    })
}

fn ensure_explain(ctx: &RunContext, prepared: &Prepared, models: &ModelMap) -> anyhow::Result<()> {
    let dir = ctx.run_dir.join("explain");
    for set in &prepared.sets {
        let att_path = dir.join(format!("attributions_{}.csv", set.tag));
        if att_path.exists() {
            continue;
        }
        fs::create_dir_all(&dir)?;
        let (train, test) = split_set(ctx, prepared, set)?;
        let n_instances = ctx.config.explain.instances.min(test.n_rows());
        let n_background = ctx.config.explain.background.min(train.n_rows());
        let background = train.select_rows(&(0..n_background).collect::<Vec<_>>());

        let mut records = Vec::new();
        let mut combinations: Vec<(String, GlobalImportance)> = Vec::new();
        let mut top_lists = Vec::new();
        for model_name in &ctx.config.experiment.models {
            let model = models
                .get(&(model_name.clone(), set.tag.clone()))
                .with_context(|| format!("no trained {model_name} for \"{}\"", set.name))?;
            for method in &ctx.config.explain.methods {
                if !method_applies(model_name, method) {
                    continue;
                }
                let combination = format!("{model_name}+{method}");
                let mut attributions = Vec::new();
                for i in 0..n_instances {
                    let attribution = explain_one(
                        ctx,
                        set,
                        model,
                        model_name,
                        method,
                        test.row(i),
                        &background,
                        i,
                    )
                    .with_context(|| format!("{combination} on test row {i}"))?;
                    records.push(AttributionRecord {
                        instance: format!("test_{i}"),
                        model: model_name.clone(),
                        attribution: attribution.clone(),
                    });
                    top_lists.push(TopKList {
                        combination: combination.clone(),
                        instance: format!("test_{i}"),
                        factors: attribution
                            .top_k(4)
                            .into_iter()
                            .map(|j| set.factors[j].clone())
                            .collect(),
                    });
                    attributions.push(attribution);
                }
                combinations.push((combination, global_importance(&attributions)?));
            }
        }
        if records.is_empty() {
            continue;
        }
        write_attributions_csv(&att_path, &records, &set.factors)?;
        write_importance_csv(
            &combinations,
            &set.factors,
            &dir.join(format!("importance_{}.csv", set.tag)),
        )?;
        if combinations.len() >= 2 {
            let report = susmap_core::attribution::consistency_report(&combinations, top_lists)?;
            fs::write(
                dir.join(format!("consistency_{}.csv", set.tag)),
                susmap_core::attribution::consistency_matrix_to_csv(&report),
            )?;
        }
    }
    Ok(())
}

fn write_importance_csv(
    combinations: &[(String, GlobalImportance)],
    factors: &[String],
    path: &Path,
) -> anyhow::Result<()> {
    let mut text = String::from("combination,factor,mean_abs_phi,rank\n");
    for (label, importance) in combinations {
        for (j, factor) in factors.iter().enumerate() {
            let _ = writeln!(
                text,
                "{label},\"{factor}\",{},{}",
                importance.mean_abs[j], importance.ranks[j]
            );
        }
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Mapping
// ---------------------------------------------------------------------------

/// Evenly strided subsample of the sorted scores, for break optimization on
/// large rasters. Deterministic and rank-preserving.
fn jenks_sample(scores: &[f64], cap: usize) -> Vec<f64> {
    if scores.len() <= cap {
        return scores.to_vec();
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    (0..cap).map(|i| sorted[i * (sorted.len() - 1) / (cap - 1)]).collect()
}

fn ensure_map(
    ctx: &RunContext,
    prepared: &Prepared,
    models: &ModelMap,
    required: bool,
) -> anyhow::Result<()> {
    let Some(grids_dir) = &ctx.config.data.grids_dir else {
        if required {
            bail!("the map stage needs data.grids_dir in the config");
        }
        return Ok(());
    };
    let dir = ctx.run_dir.join("map");
    fs::create_dir_all(&dir)?;
    let k = ctx.config.map.classes;
    let levels = level_names(k);

    // Landslide coordinates (for the density report) come from the labeled
    // samples; a sample file without x/y still maps, it just has no density.
    let slide_coords: Option<Vec<(f64, f64)>> =
        prepared.table.coords().zip(prepared.table.labels()).map(|(coords, labels)| {
            coords
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == 1)
                .map(|(&c, _)| c)
                .collect()
        });

    for set in &prepared.sets {
        let mut grids = Vec::new();
        for factor in &set.factors {
            let path = grids_dir.join(format!("{}.asc", sanitize(factor)));
            let grid = read_ascii_grid(&path)
                .with_context(|| format!("factor \"{factor}\" needs grid {}", path.display()))?;
            if let Some(first) = grids.first() {
                let (f, _): &(RasterGrid, String) = first;
                if grid.ncols != f.ncols
                    || grid.nrows != f.nrows
                    || grid.cellsize != f.cellsize
                    || grid.xllcorner != f.xllcorner
                    || grid.yllcorner != f.yllcorner
                {
                    bail!(
                        "grid {} disagrees with {} on size or placement",
                        path.display(),
                        grids[0].1
                    );
                }
            }
            grids.push((grid, path.display().to_string()));
        }
        let base = &grids[0].0;
        let mut cells = Vec::new();
        for r in 0..base.nrows {
            for c in 0..base.ncols {
                if grids.iter().all(|(g, _)| !g.is_nodata(g.get(r, c))) {
                    cells.push((r, c));
                }
            }
        }
        if cells.is_empty() {
            bail!("factor set \"{}\": no cell is valid in every factor grid", set.name);
        }

        // Landslide presence per valid cell.
        let is_slide: Option<Vec<bool>> = slide_coords.as_ref().map(|coords| {
            let mut marked = vec![false; base.nrows * base.ncols];
            for &(x, y) in coords {
                let col = ((x - base.xllcorner) / base.cellsize).floor();
                let row_up = ((y - base.yllcorner) / base.cellsize).floor();
                if col >= 0.0
                    && row_up >= 0.0
                    && col < base.ncols as f64
                    && row_up < base.nrows as f64
                {
                    let row = base.nrows - 1 - row_up as usize;
                    marked[row * base.ncols + col as usize] = true;
                }
            }
            cells.iter().map(|&(r, c)| marked[r * base.ncols + c]).collect()
        });

        for name in &ctx.config.experiment.models {
            let sus_path = dir.join(format!("susceptibility_{}_{}.asc", name, set.tag));
            if sus_path.exists() {
                continue;
            }
            let model = models
                .get(&(name.clone(), set.tag.clone()))
                .with_context(|| format!("no trained {name} for \"{}\"", set.name))?;
            let mut sample = vec![0.0; grids.len()];
            let scores: Vec<f64> = cells
                .iter()
                .map(|&(r, c)| {
                    for (v, (g, _)) in sample.iter_mut().zip(&grids) {
                        *v = g.get(r, c);
                    }
                    model.score(&sample)
                })
                .collect();

            let mut surface = RasterGrid::new(
                base.ncols,
                base.nrows,
                base.xllcorner,
                base.yllcorner,
                base.cellsize,
                base.nodata,
                vec![base.nodata; base.ncols * base.nrows],
            )?;
            for (&(r, c), &s) in cells.iter().zip(&scores) {
                surface.set(r, c, s);
            }
            write_ascii_grid(&surface, &sus_path)?;

            let breaks = jenks_breaks(&jenks_sample(&scores, ctx.config.map.jenks_sample_cap), k)
                .with_context(|| format!("break optimization for {name} on \"{}\"", set.name))?;
            let class_grid = classify_grid(&surface, &breaks)?;
            write_ascii_grid(&class_grid, &dir.join(format!("classes_{}_{}.asc", name, set.tag)))?;

            let mut legend_text = String::from("class,level,lower,upper\n");
            for row in legend(&breaks) {
                let fmt = |b: Option<f64>| b.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(
                    legend_text,
                    "{},{},{},{}",
                    row.class,
                    row.name,
                    fmt(row.lower),
                    fmt(row.upper)
                );
            }
            fs::write(dir.join(format!("legend_{}_{}.csv", name, set.tag)), legend_text)?;

            if let Some(is_slide) = &is_slide {
                let cell_classes: Vec<usize> = scores.iter().map(|&s| classify(s, &breaks)).collect();
                let densities = density_by_class(&cell_classes, is_slide, k)?;
                let mut text = String::from(
                    "class,level,pixels,landslides,area_pct,landslide_pct,density\n",
                );
                for d in densities {
                    let _ = writeln!(
                        text,
                        "{},{},{},{},{},{},{}",
                        d.class,
                        levels[d.class],
                        d.pixels,
                        d.landslides,
                        d.area_pct,
                        d.landslide_pct,
                        d.density.map(|v| v.to_string()).unwrap_or_default()
                    );
                }
                fs::write(dir.join(format!("density_{}_{}.csv", name, set.tag)), text)?;
            }
        }
    }
    Ok(())
}
