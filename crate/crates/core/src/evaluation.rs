//! Classification quality measures: confusion-matrix metrics, Cohen's
//! kappa, rank-based ROC AUC, and susceptibility-class landslide densities.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Raw 2×2 confusion tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Tallies predictions against labels at a score threshold; scores at or
/// above the threshold predict the positive class.
pub fn confusion_from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let mut c = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        true_neg: 0,
        false_neg: 0,
    };
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    Ok(c)
}

/// Derived confusion metrics; a field is `None` when its denominator is
/// zero, so an undefined metric can never masquerade as a score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// True-negative rate, TN / (TN + FP).
    pub specificity: Option<f64>,
    /// Chance-corrected agreement (Cohen's kappa).
    pub kappa: Option<f64>,
    /// Share of agreeing predictions — numerically identical to accuracy.
    /// Kept as its own field because some published comparisons report this
    /// ratio under other names; reading it out keeps tables unambiguous.
    pub agreement_rate: Option<f64>,
}

/// Computes all derived metrics from confusion tallies.
pub fn confusion_metrics(c: &ConfusionCounts) -> ConfusionMetrics {
    let (tp, fp, tn, fneg) = (
        c.true_pos as f64,
        c.false_pos as f64,
        c.true_neg as f64,
        c.false_neg as f64,
    );
    let n = tp + fp + tn + fneg;
    let ratio = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
    let accuracy = ratio(tp + tn, n);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    let specificity = ratio(tn, tn + fp);
    let kappa = if n > 0.0 {
        let pe = ((tp + fp) * (tp + fneg) + (tn + fneg) * (tn + fp)) / (n * n);
        if (1.0 - pe).abs() > 0.0 {
            Some((accuracy.unwrap() - pe) / (1.0 - pe))
        } else {
            None
        }
    } else {
        None
    };
    ConfusionMetrics {
        accuracy,
        precision,
        recall,
        f1,
        specificity,
        kappa,
        agreement_rate: accuracy,
    }
}

/// Area under the ROC curve by the rank-sum (Mann–Whitney) route.
///
/// Tied scores receive their average rank, which is equivalent to counting
/// a tied positive/negative pair as half concordant. Needs at least one
/// sample of each class.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(format!(
            "ROC AUC needs both classes; got {n_pos} positive and {n_neg} negative"
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite score {bad}")));
    }
    let ranks = stats::average_ranks(scores);
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let n_pos = n_pos as f64;
    let n_neg = n_neg as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

/// Landslide concentration within one susceptibility class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDensity {
    pub class: usize,
    pub pixels: u64,
    pub landslides: u64,
    /// Percent of all counted pixels in this class.
    pub area_pct: f64,
    /// Percent of all landslide pixels in this class.
    pub landslide_pct: f64,
    /// Landslide share over area share; `None` for an empty class.
    pub density: Option<f64>,
}

/// Per-class landslide density over `n_classes` susceptibility levels.
pub fn density_by_class(
    classes: &[usize],
    is_landslide: &[bool],
    n_classes: usize,
) -> Result<Vec<ClassDensity>> {
    if classes.len() != is_landslide.len() {
        return Err(Error::DimensionMismatch {
            expected: classes.len(),
            actual: is_landslide.len(),
        });
    }
    if n_classes == 0 || classes.is_empty() {
        return Err(Error::InvalidArgument(
            "density needs at least one class and one pixel".into(),
        ));
    }
    if let Some(&bad) = classes.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "class id {bad} out of range for {n_classes} classes"
        )));
    }
    let mut pixels = vec![0u64; n_classes];
    let mut slides = vec![0u64; n_classes];
    for (&c, &s) in classes.iter().zip(is_landslide) {
        pixels[c] += 1;
        if s {
            slides[c] += 1;
        }
    }
    let total_pixels: u64 = pixels.iter().sum();
    let total_slides: u64 = slides.iter().sum();
    Ok((0..n_classes)
        .map(|c| {
            let area_pct = 100.0 * pixels[c] as f64 / total_pixels as f64;
            let landslide_pct = if total_slides > 0 {
                100.0 * slides[c] as f64 / total_slides as f64
            } else {
                0.0
            };
            ClassDensity {
                class: c,
                pixels: pixels[c],
                landslides: slides[c],
                area_pct,
                landslide_pct,
                density: (pixels[c] > 0).then(|| {
                    if total_slides > 0 {
                        landslide_pct / area_pct
                    } else {
                        0.0
                    }
                }),
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Metrics table export
// ---------------------------------------------------------------------------

/// One model/factor-set evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    /// Factor-set tag, e.g. a set name or factor count.
    pub factors: String,
    pub metrics: ConfusionMetrics,
    pub auc: Option<f64>,
}

pub const METRICS_CSV_HEADER: &str = "model,factors,Accuracy,Precision,Recall,F1 score,AUC,Kappa";

/// CSV rendering of evaluation rows; undefined metrics become empty fields.
pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    fn opt(v: Option<f64>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.model,
            r.factors,
            opt(r.metrics.accuracy),
            opt(r.metrics.precision),
            opt(r.metrics.recall),
            opt(r.metrics.f1),
            opt(r.auc),
            opt(r.metrics.kappa)
        );
    }
    out
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, metrics_to_csv(rows))
        .map_err(|e| Error::io(&path.display().to_string(), e))
}
