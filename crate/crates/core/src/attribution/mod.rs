//! Local and global model explanation: exact and permutation-sampled
//! Shapley values, ridge-surrogate local fits, and reference-difference
//! propagation through the neural networks, plus aggregation into global
//! rankings and cross-model consistency matrices.

pub mod deeplift;
pub mod lime;
pub mod shapley;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FactorTable;
use crate::error::{Error, Result};
use crate::stats::spearman;

pub use deeplift::{deeplift, deeplift_cnn, deeplift_lstm};
pub use lime::{lime_explain, LimeConfig};
pub use shapley::{shapley_exact, shapley_sampled};

/// Anything that maps a factor vector to a scalar score: trained
/// classifiers (probability) and additive weight models (susceptibility
/// index) alike.
pub trait Scorer {
    fn n_factors(&self) -> usize;
    fn score(&self, sample: &[f64]) -> f64;
}

/// How a set of contributions was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    ShapleyExact,
    ShapleySampled,
    Lime,
    DeepLift,
}

impl AttributionMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttributionMethod::ShapleyExact => "shapley_exact",
            AttributionMethod::ShapleySampled => "shapley_sampled",
            AttributionMethod::Lime => "lime",
            AttributionMethod::DeepLift => "deeplift",
        }
    }
}

/// Per-factor contributions for one explained instance.
///
/// Conventions: for the Shapley methods and the reference-difference
/// propagation, `baseline` is the expected/reference score and the
/// contributions satisfy Σφ + baseline ≈ score(x); for the local
/// surrogate, φ are the fitted local slopes and `baseline` is the
/// surrogate's intercept at x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub method: AttributionMethod,
    pub phi: Vec<f64>,
    pub baseline: f64,
    pub seed: Option<u64>,
}

impl Attribution {
    pub fn n_factors(&self) -> usize {
        self.phi.len()
    }

    /// Indices of the `k` largest |φ|, ties resolved toward the lower
    /// factor index.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.phi.len()).collect();
        order.sort_by(|&a, &b| {
            self.phi[b]
                .abs()
                .total_cmp(&self.phi[a].abs())
                .then(a.cmp(&b))
        });
        order.truncate(k);
        order
    }
}

/// An attribution tagged with where it came from, for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub instance: String,
    pub model: String,
    pub attribution: Attribution,
}

pub const ATTRIBUTION_CSV_HEADER: &str = "instance_id,model,method,factor,phi,baseline,seed";

/// Renders attribution records as CSV, one row per (instance, factor).
pub fn attributions_to_csv(records: &[AttributionRecord], factor_names: &[String]) -> Result<String> {
    let mut out = String::from(ATTRIBUTION_CSV_HEADER);
    out.push('\n');
    for record in records {
        if record.attribution.phi.len() != factor_names.len() {
            return Err(Error::DimensionMismatch {
                expected: factor_names.len(),
                actual: record.attribution.phi.len(),
            });
        }
        let seed = record
            .attribution
            .seed
            .map_or(String::new(), |s| s.to_string());
        for (name, phi) in factor_names.iter().zip(&record.attribution.phi) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                record.instance,
                record.model,
                record.attribution.method.as_str(),
                name,
                phi,
                record.attribution.baseline,
                seed
            ));
        }
    }
    Ok(out)
}

pub fn write_attributions_csv(
    path: &Path,
    records: &[AttributionRecord],
    factor_names: &[String],
) -> Result<()> {
    let body = attributions_to_csv(records, factor_names)?;
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Mean |φ| per factor over an evaluation set, with the resulting
/// descending rank order (rank 1 = most important; ties resolved toward
/// the lower factor index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub mean_abs: Vec<f64>,
    /// `ranks[i]` is factor i's rank, a permutation of 1..=f.
    pub ranks: Vec<usize>,
}

pub fn global_importance(attributions: &[Attribution]) -> Result<GlobalImportance> {
    let first = attributions
        .first()
        .ok_or_else(|| Error::InvalidArgument("no attributions to aggregate".into()))?;
    let f = first.phi.len();
    let mut mean_abs = vec![0.0; f];
    for attribution in attributions {
        if attribution.phi.len() != f {
            return Err(Error::DimensionMismatch {
                expected: f,
                actual: attribution.phi.len(),
            });
        }
        for (acc, phi) in mean_abs.iter_mut().zip(&attribution.phi) {
            *acc += phi.abs();
        }
    }
    for acc in &mut mean_abs {
        *acc /= attributions.len() as f64;
    }
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; f];
    for (rank0, &factor) in order.iter().enumerate() {
        ranks[factor] = rank0 + 1;
    }
    Ok(GlobalImportance { mean_abs, ranks })
}

/// A per-instance top-k factor list for one (model, method) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKList {
    pub combination: String,
    pub instance: String,
    pub factors: Vec<String>,
}

/// Pairwise rank agreement between combinations plus the local top-k
/// tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub labels: Vec<String>,
    /// Spearman correlation of the global importance profiles; diagonal 1.
    pub matrix: Vec<Vec<f64>>,
    pub top_k: Vec<TopKList>,
}

/// Builds the consistency matrix from ≥ 2 labeled global rankings.
/// Correlations use average ranks for ties (via the Spearman helper).
pub fn consistency_report(
    combinations: &[(String, GlobalImportance)],
    top_k: Vec<TopKList>,
) -> Result<ConsistencyReport> {
    if combinations.len() < 2 {
        return Err(Error::InvalidArgument(
            "consistency needs at least two (model, method) combinations".into(),
        ));
    }
    let f = combinations[0].1.mean_abs.len();
    for (_, importance) in combinations {
        if importance.mean_abs.len() != f {
            return Err(Error::DimensionMismatch {
                expected: f,
                actual: importance.mean_abs.len(),
            });
        }
    }
    let n = combinations.len();
    let mut matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        matrix[i][i] = 1.0;
        for j in (i + 1)..n {
            let rho = spearman(&combinations[i].1.mean_abs, &combinations[j].1.mean_abs);
            matrix[i][j] = rho;
            matrix[j][i] = rho;
        }
    }
    Ok(ConsistencyReport {
        labels: combinations.iter().map(|(l, _)| l.clone()).collect(),
        matrix,
        top_k,
    })
}

/// Renders the consistency matrix as CSV with combination labels as both
/// row and column headers.
pub fn consistency_matrix_to_csv(report: &ConsistencyReport) -> String {
    let mut out = String::from("combination");
    for label in &report.labels {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for (label, row) in report.labels.iter().zip(&report.matrix) {
        out.push_str(label);
        for value in row {
            out.push(',');
            out.push_str(&value.to_string());
        }
        out.push('\n');
    }
    out
}

/// Column-wise mean of a table: the default reference/background point.
pub fn background_mean(table: &FactorTable) -> Vec<f64> {
    let f = table.n_factors();
    let mut mean = vec![0.0; f];
    for r in 0..table.n_rows() {
        for (m, v) in mean.iter_mut().zip(table.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= table.n_rows() as f64;
    }
    mean
}
