//! Multicollinearity and factor-significance screening.
//!
//! Two pre-modeling checks: variance inflation factors for each factor
//! column, and an ordinary-least-squares linear probability fit of the
//! binary label on all factors, with classical t-based significance tests.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FactorTable;
use crate::error::{Error, Result};
use crate::linalg::{lstsq, Mat};
use crate::stats;

/// Variance inflation factor for one factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifEntry {
    pub factor: String,
    /// 1 / (1 − R²) of this factor regressed on all others; infinite when
    /// the factor is an exact linear combination of the rest.
    pub vif: f64,
}

/// Computes the variance inflation factor of every factor column.
///
/// Each factor is regressed (with intercept) on all remaining factors. A
/// factor that the others explain perfectly yields an infinite VIF; a
/// rank-deficient design among the *other* columns is an error naming the
/// offending column.
pub fn vif(table: &FactorTable) -> Result<Vec<VifEntry>> {
    let f = table.n_factors();
    if f < 2 {
        return Err(Error::InvalidArgument(
            "variance inflation needs at least two factors".into(),
        ));
    }
    let n = table.n_rows();
    if n <= f {
        return Err(Error::InvalidArgument(format!(
            "variance inflation needs more rows ({n}) than factors ({f})"
        )));
    }
    let mut out = Vec::with_capacity(f);
    for j in 0..f {
        let y = table.column(j);
        let mut design = Mat::zeros(n, f); // intercept + the other f−1 factors
        let mut names = vec!["intercept".to_string()];
        names.extend(
            (0..f)
                .filter(|&k| k != j)
                .map(|k| table.metas()[k].name.clone()),
        );
        for r in 0..n {
            design.set(r, 0, 1.0);
        }
        for (col, k) in (0..f).filter(|&k| k != j).enumerate() {
            for r in 0..n {
                design.set(r, col + 1, table.value(r, k));
            }
        }
        let fit = lstsq(&design, &y, &names)?;
        let mut rss = 0.0;
        for r in 0..n {
            let mut pred = 0.0;
            for c in 0..f {
                pred += design.get(r, c) * fit.coeffs[c];
            }
            let e = y[r] - pred;
            rss += e * e;
        }
        let ybar = stats::mean(&y);
        let tss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
        if tss <= 0.0 {
            return Err(Error::InvalidTable(format!(
                "factor \"{}\" is constant; variance inflation undefined",
                table.metas()[j].name
            )));
        }
        let r2 = 1.0 - rss / tss;
        let vif = if r2 >= 1.0 - 1e-12 {
            f64::INFINITY
        } else {
            1.0 / (1.0 - r2)
        };
        out.push(VifEntry {
            factor: table.metas()[j].name.clone(),
            vif,
        });
    }
    Ok(out)
}

/// One coefficient row of an OLS significance summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsRow {
    pub factor: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub t_statistic: f64,
    pub p_value: f64,
}

/// Full OLS linear-probability summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsSummary {
    /// Intercept first, then one row per factor in table order.
    pub rows: Vec<OlsRow>,
    pub r_squared: f64,
    pub residual_dof: usize,
}

/// Fits labels (0/1) on all factors by ordinary least squares and reports
/// classical two-sided t-tests per coefficient.
///
/// The error variance estimate is RSS / (n − f − 1); standard errors come
/// from the diagonal of σ̂²(XᵀX)⁻¹. Requires more rows than coefficients.
pub fn ols_regression(table: &FactorTable) -> Result<OlsSummary> {
    let labels = table
        .labels()
        .ok_or_else(|| Error::Labels("significance regression requires labels".into()))?;
    let n = table.n_rows();
    let f = table.n_factors();
    if n <= f + 1 {
        return Err(Error::InvalidArgument(format!(
            "need more rows ({n}) than coefficients ({})",
            f + 1
        )));
    }
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let mut design = Mat::zeros(n, f + 1);
    let mut names = vec!["Intercept".to_string()];
    names.extend(table.factor_names());
    for r in 0..n {
        design.set(r, 0, 1.0);
        for j in 0..f {
            design.set(r, j + 1, table.value(r, j));
        }
    }
    let fit = lstsq(&design, &y, &names)?;

    let mut rss = 0.0;
    for r in 0..n {
        let mut pred = 0.0;
        for c in 0..=f {
            pred += design.get(r, c) * fit.coeffs[c];
        }
        let e = y[r] - pred;
        rss += e * e;
    }
    let dof = n - f - 1;
    let sigma2 = rss / dof as f64;
    let ybar = stats::mean(&y);
    let tss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 0.0 };

    let mut rows = Vec::with_capacity(f + 1);
    for j in 0..=f {
        let se = (sigma2 * fit.xtx_inv_diag[j]).sqrt();
        let t = if se > 0.0 {
            fit.coeffs[j] / se
        } else {
            f64::INFINITY
        };
        rows.push(OlsRow {
            factor: names[j].clone(),
            coefficient: fit.coeffs[j],
            std_error: se,
            t_statistic: t,
            p_value: stats::student_t_two_sided_p(t, dof as f64),
        });
    }
    Ok(OlsSummary {
        rows,
        r_squared,
        residual_dof: dof,
    })
}

pub const VIF_CSV_HEADER: &str = "factor,VIF";
pub const OLS_CSV_HEADER: &str = "factor,Coefficient,Standard Error,t-statistic,P-value";

/// CSV rendering of VIF entries (shortest round-trip float form).
pub fn vif_to_csv(entries: &[VifEntry]) -> String {
    let mut out = String::from(VIF_CSV_HEADER);
    out.push('\n');
    for e in entries {
        let _ = writeln!(out, "{},{}", e.factor, e.vif);
    }
    out
}

/// CSV rendering of an OLS summary.
pub fn ols_to_csv(summary: &OlsSummary) -> String {
    let mut out = String::from(OLS_CSV_HEADER);
    out.push('\n');
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.factor, r.coefficient, r.std_error, r.t_statistic, r.p_value
        );
    }
    out
}

pub fn write_vif_csv(entries: &[VifEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, vif_to_csv(entries))
        .map_err(|e| Error::io(&path.display().to_string(), e))
}

pub fn write_ols_csv(summary: &OlsSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ols_to_csv(summary))
        .map_err(|e| Error::io(&path.display().to_string(), e))
}
