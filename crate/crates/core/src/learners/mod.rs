//! Supervised classifiers trained on factor tables: regularized logistic
//! regression, a kernel support-vector classifier, gradient-boosted trees,
//! and (via [`crate::neural`]) two small sequence networks, all behind one
//! persistable [`TrainedModel`] enum.

pub mod gbt;
pub mod grid;
pub mod logistic;
pub mod svm;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribution::Scorer;
use crate::data::{FactorTable, Scaler};
use crate::error::{Error, Result};
use crate::neural::{CnnModel, LstmModel};

pub use gbt::{GbtConfig, GbtModel};
pub use grid::{
    default_grid, grid_search, stratified_folds, train_candidate, CandidateConfig, GridPoint,
    SearchReport,
};
pub use logistic::{LogisticConfig, LogisticModel, Penalty};
pub use svm::{Kernel, KernelSpec, SvmConfig, SvmModel};

/// Model family tag used in configs, reports, and file names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lr,
    Svm,
    Gbt,
    Cnn,
    Lstm,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Svm => "svm",
            ModelKind::Gbt => "gbt",
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(ModelKind::Lr),
            "svm" => Ok(ModelKind::Svm),
            "gbt" => Ok(ModelKind::Gbt),
            "cnn" => Ok(ModelKind::Cnn),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::InvalidArgument(format!(
                "unknown model \"{other}\" (expected lr, svm, gbt, cnn, or lstm)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Any trained classifier; `predict` returns P(label = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Logistic(LogisticModel),
    Svm(SvmModel),
    Gbt(GbtModel),
    Cnn(CnnModel),
    Lstm(LstmModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Logistic(_) => ModelKind::Lr,
            TrainedModel::Svm(_) => ModelKind::Svm,
            TrainedModel::Gbt(_) => ModelKind::Gbt,
            TrainedModel::Cnn(_) => ModelKind::Cnn,
            TrainedModel::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn n_factors(&self) -> usize {
        match self {
            TrainedModel::Logistic(m) => m.coefficients.len(),
            TrainedModel::Svm(m) => m.n_factors(),
            TrainedModel::Gbt(m) => m.n_factors(),
            TrainedModel::Cnn(m) => m.n_factors(),
            TrainedModel::Lstm(m) => m.n_factors(),
        }
    }

    /// Probability of the positive class for one sample.
    pub fn predict(&self, sample: &[f64]) -> f64 {
        match self {
            TrainedModel::Logistic(m) => m.predict(sample),
            TrainedModel::Svm(m) => m.predict(sample),
            TrainedModel::Gbt(m) => m.predict(sample),
            TrainedModel::Cnn(m) => m.predict(sample),
            TrainedModel::Lstm(m) => m.predict(sample),
        }
    }

    pub fn predict_batch(&self, table: &FactorTable) -> Vec<f64> {
        (0..table.n_rows()).map(|r| self.predict(table.row(r))).collect()
    }
}

impl Scorer for TrainedModel {
    fn n_factors(&self) -> usize {
        TrainedModel::n_factors(self)
    }

    fn score(&self, sample: &[f64]) -> f64 {
        self.predict(sample)
    }
}

/// A trained model plus everything needed to score raw (unscaled) samples:
/// the factor names it was trained on and the optional standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub factor_names: Vec<String>,
    pub scaler: Option<Scaler>,
    pub model: TrainedModel,
}

/// On-disk envelope identifying the file type and layout version.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    bundle: ModelBundle,
}

const MODEL_FORMAT: &str = "susmap-model";
const MODEL_VERSION: u32 = 1;

impl ModelBundle {
    pub fn new(factor_names: Vec<String>, scaler: Option<Scaler>, model: TrainedModel) -> Self {
        ModelBundle {
            factor_names,
            scaler,
            model,
        }
    }

    /// Probability for a raw-space sample (applies the stored scaling).
    pub fn predict_raw(&self, sample: &[f64]) -> f64 {
        match &self.scaler {
            Some(s) => self.model.predict(&s.transform_sample(sample)),
            None => self.model.predict(sample),
        }
    }

    /// Serializes to pretty JSON. All parameters are finite f64s printed in
    /// shortest round-trip form, so load(save(m)) == m exactly.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            bundle: self.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::ModelFormat(format!("cannot parse model file: {e}")))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!(
                "unexpected format tag \"{}\"",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported model version {}",
                file.version
            )));
        }
        if file.bundle.factor_names.len() != file.bundle.model.n_factors() {
            return Err(Error::ModelFormat(format!(
                "model expects {} factors but file names {}",
                file.bundle.model.n_factors(),
                file.bundle.factor_names.len()
            )));
        }
        Ok(file.bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json())
            .map_err(|e| Error::io(&path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(&path.display().to_string(), e))?;
        Self::from_json(&text)
    }
}

/// Splits a labeled table into `(features-as-rows, labels-as-f64)` for the
/// trainers in this module.
pub(crate) fn design_from_table(table: &FactorTable) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let labels = table
        .labels()
        .ok_or_else(|| Error::Labels("training requires labels".into()))?;
    let xs: Vec<Vec<f64>> = (0..table.n_rows()).map(|r| table.row(r).to_vec()).collect();
    let ys: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    if ys.iter().all(|&y| y == 0.0) || ys.iter().all(|&y| y == 1.0) {
        return Err(Error::Labels(
            "training requires both classes to be present".into(),
        ));
    }
    Ok((xs, ys))
}
