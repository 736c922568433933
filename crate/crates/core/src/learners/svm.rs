//! Kernel support-vector classification trained by sequential minimal
//! optimization, with a sigmoid calibration layer so predictions satisfy the
//! uniform probability contract.
//!
//! The optimizer is the classic two-loop SMO working-set scheme with an
//! error cache, made fully deterministic: candidate scans run in ascending
//! index order and the second-choice heuristic breaks ties by smallest
//! index, so retraining on identical data reproduces identical models.

use serde::{Deserialize, Serialize};

use crate::data::FactorTable;
use crate::error::{Error, Result};
use crate::learners::logistic::sigmoid;

/// Kernel as requested in a config; the RBF bandwidth may be left to the
/// median-pairwise-distance heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Poly { degree: u32, coef0: f64 },
    Rbf { sigma: Option<f64> },
}

/// Kernel with all parameters resolved (as stored in a trained model).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// k(x, z) = x·z
    Linear,
    /// k(x, z) = (x·z + coef0)^degree
    Poly { degree: u32, coef0: f64 },
    /// k(x, z) = exp(−‖x−z‖² / (2σ²))
    Rbf { sigma: f64 },
}

impl Kernel {
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(x, z),
            Kernel::Poly { degree, coef0 } => (dot(x, z) + coef0).powi(degree as i32),
            Kernel::Rbf { sigma } => {
                let d2: f64 = x
                    .iter()
                    .zip(z)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// SVM training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Box constraint on the dual coefficients.
    pub c: f64,
    pub kernel: KernelSpec,
    /// KKT violation tolerance at convergence.
    pub tol: f64,
    /// Safety cap on optimizer sweeps.
    pub max_sweeps: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 5.0,
            kernel: KernelSpec::Rbf { sigma: None },
            tol: 1e-3,
            max_sweeps: 10_000,
        }
    }
}

/// Convergence diagnostics kept with the model; `total_slack` is Σ max(0,
/// 1 − y·f) over the training set, the margin-violation mass of the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmTrainingReport {
    pub n_support: usize,
    pub total_slack: f64,
    pub max_kkt_violation: f64,
    pub sweeps: usize,
}

/// Trained support-vector classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    support_vectors: Vec<Vec<f64>>,
    /// α_i·y_i for each support vector.
    dual_coefs: Vec<f64>,
    pub bias: f64,
    /// Calibration sigmoid: P = 1/(1 + exp(a·decision + b)).
    platt_a: f64,
    platt_b: f64,
    pub report: SvmTrainingReport,
}

impl SvmModel {
    pub fn n_factors(&self) -> usize {
        self.support_vectors.first().map_or(0, |sv| sv.len())
    }

    pub fn n_support(&self) -> usize {
        self.support_vectors.len()
    }

    pub fn dual_coefs(&self) -> &[f64] {
        &self.dual_coefs
    }

    /// Uncalibrated decision value Σ αᵢyᵢ k(xᵢ, x) + b.
    pub fn decision(&self, sample: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, a)| a * self.kernel.eval(sv, sample))
            .sum::<f64>()
            + self.bias
    }

    /// Calibrated probability of the positive class.
    pub fn predict(&self, sample: &[f64]) -> f64 {
        sigmoid(-(self.platt_a * self.decision(sample) + self.platt_b))
    }
}

/// Median Euclidean distance over all sample pairs (RBF bandwidth heuristic).
pub fn median_pairwise_distance(xs: &[Vec<f64>]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "bandwidth heuristic needs at least two samples".into(),
        ));
    }
    let mut dists = Vec::with_capacity(xs.len() * (xs.len() - 1) / 2);
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            let d2: f64 = xs[i]
                .iter()
                .zip(&xs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let median = dists[dists.len() / 2];
    if median <= 0.0 {
        return Err(Error::InvalidArgument(
            "median pairwise distance is zero; set the bandwidth explicitly".into(),
        ));
    }
    Ok(median)
}

/// Trains a C-SVC on a labeled table and calibrates its probabilities on
/// out-of-fold decision values (3 stratified folds; tiny single-class-fold
/// datasets fall back to in-sample decision values).
pub fn train_svm(table: &FactorTable, config: &SvmConfig) -> Result<SvmModel> {
    let (xs, ys01) = super::design_from_table(table)?;
    if !(config.c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "box constraint c must be positive, got {}",
            config.c
        )));
    }
    let ys: Vec<f64> = ys01.iter().map(|&y| if y == 1.0 { 1.0 } else { -1.0 }).collect();
    let kernel = resolve_kernel(config.kernel, &xs)?;

    // Calibration data first: out-of-fold decision values.
    let n_pos = ys01.iter().filter(|&&y| y == 1.0).count();
    let n_neg = ys01.len() - n_pos;
    let (cal_decisions, cal_labels) = if n_pos >= 3 && n_neg >= 3 {
        let folds = super::grid::stratified_folds_from_labels(
            &ys01.iter().map(|&y| y as u8).collect::<Vec<_>>(),
            3,
            0,
        )?;
        let mut decisions = vec![0.0; xs.len()];
        for fold in &folds {
            let held: Vec<bool> = {
                let mut mask = vec![false; xs.len()];
                for &i in fold {
                    mask[i] = true;
                }
                mask
            };
            let train_idx: Vec<usize> = (0..xs.len()).filter(|i| !held[*i]).collect();
            let sub_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| xs[i].clone()).collect();
            let sub_y: Vec<f64> = train_idx.iter().map(|&i| ys[i]).collect();
            let solution = smo(&sub_x, &sub_y, kernel, config.c, config.tol, config.max_sweeps)?;
            for &i in fold {
                decisions[i] = solution.decision(&sub_x, kernel, &xs[i]);
            }
        }
        (decisions, ys01.clone())
    } else {
        (Vec::new(), Vec::new()) // filled from the full fit below
    };

    let solution = smo(&xs, &ys, kernel, config.c, config.tol, config.max_sweeps)?;

    let full_decisions: Vec<f64> = xs
        .iter()
        .map(|x| solution.decision(&xs, kernel, x))
        .collect();
    let (platt_a, platt_b) = if cal_decisions.is_empty() {
        fit_platt(&full_decisions, &ys01)
    } else {
        fit_platt(&cal_decisions, &cal_labels)
    };

    let total_slack: f64 = full_decisions
        .iter()
        .zip(&ys)
        .map(|(&f, &y)| (1.0 - y * f).max(0.0))
        .sum();

    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for (i, &ay) in solution.alpha.iter().enumerate() {
        // solution.alpha already carries the label sign: entries are αᵢyᵢ.
        if ay.abs() > 1e-12 {
            support_vectors.push(xs[i].clone());
            dual_coefs.push(ay);
        }
    }
    if support_vectors.is_empty() {
        return Err(Error::InvalidArgument(
            "optimization ended with no support vectors".into(),
        ));
    }
    let max_kkt_violation = solution.max_kkt_violation(&full_decisions, &ys, config.c);
    let report = SvmTrainingReport {
        n_support: dual_coefs.len(),
        total_slack,
        max_kkt_violation,
        sweeps: solution.sweeps,
    };

    Ok(SvmModel {
        kernel,
        c: config.c,
        support_vectors,
        dual_coefs,
        bias: solution.bias,
        platt_a,
        platt_b,
        report,
    })
}

fn resolve_kernel(spec: KernelSpec, xs: &[Vec<f64>]) -> Result<Kernel> {
    Ok(match spec {
        KernelSpec::Linear => Kernel::Linear,
        KernelSpec::Poly { degree, coef0 } => {
            if degree == 0 {
                return Err(Error::InvalidArgument("polynomial degree must be ≥ 1".into()));
            }
            Kernel::Poly { degree, coef0 }
        }
        KernelSpec::Rbf { sigma: Some(s) } => {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "rbf bandwidth must be positive, got {s}"
                )));
            }
            Kernel::Rbf { sigma: s }
        }
        KernelSpec::Rbf { sigma: None } => Kernel::Rbf {
            sigma: median_pairwise_distance(xs)?,
        },
    })
}

struct SmoSolution {
    alpha: Vec<f64>,
    bias: f64,
    sweeps: usize,
}

impl SmoSolution {
    fn decision(&self, xs: &[Vec<f64>], kernel: Kernel, sample: &[f64]) -> f64 {
        let mut f = self.bias;
        for (i, &a) in self.alpha.iter().enumerate() {
            if a != 0.0 {
                // alpha carries y through its pairing below
                f += a * kernel.eval(&xs[i], sample);
            }
        }
        f
    }

    fn max_kkt_violation(&self, decisions: &[f64], ys: &[f64], c: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, (&f, &y)) in decisions.iter().zip(ys).enumerate() {
            let a = self.alpha[i].abs(); // |α·y| = α
            let margin = y * f;
            let v = if a <= 1e-12 {
                (1.0 - margin).max(0.0)
            } else if a >= c - 1e-12 {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Two-loop SMO on the hinge-loss dual. `alpha` in the returned solution is
/// stored as αᵢ·yᵢ so decision evaluation needs no separate label vector.
fn smo(
    xs: &[Vec<f64>],
    ys: &[f64],
    kernel: Kernel,
    c: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<SmoSolution> {
    let n = xs.len();
    if n.saturating_mul(n) > 25_000_000 {
        return Err(Error::InvalidArgument(format!(
            "{n} samples need a {n}×{n} kernel matrix; reduce the training set"
        )));
    }
    // Dense Gram matrix: every SMO step touches full rows.
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = kernel.eval(&xs[i], &xs[j]);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let mut alpha = vec![0.0; n];
    let mut bias = 0.0;
    // Error cache: E_i = f(x_i) − y_i.
    let mut err: Vec<f64> = ys.iter().map(|&y| -y).collect();

    let take_step = |i1: usize,
                         i2: usize,
                         alpha: &mut Vec<f64>,
                         bias: &mut f64,
                         err: &mut Vec<f64>|
     -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (alpha[i1], alpha[i2]);
        let (y1, y2) = (ys[i1], ys[i2]);
        let (e1, e2) = (err[i1], err[i2]);
        let s = y1 * y2;
        let (lo, hi) = if s < 0.0 {
            ((a2_old - a1_old).max(0.0), (c + a2_old - a1_old).min(c))
        } else {
            ((a1_old + a2_old - c).max(0.0), (a1_old + a2_old).min(c))
        };
        if lo >= hi {
            return false;
        }
        let k11 = gram[i1 * n + i1];
        let k12 = gram[i1 * n + i2];
        let k22 = gram[i2 * n + i2];
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2 = if eta > 0.0 {
            (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Degenerate curvature: evaluate the dual objective at both ends.
            // The linear terms need the biasless margins, i.e. Eᵢ − b.
            let f1 = y1 * (e1 - *bias) - a1_old * k11 - s * a2_old * k12;
            let f2 = y2 * (e2 - *bias) - s * a1_old * k12 - a2_old * k22;
            let l1 = a1_old + s * (a2_old - lo);
            let h1 = a1_old + s * (a2_old - hi);
            let lo_obj = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22
                + s * lo * l1 * k12;
            let hi_obj = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22
                + s * hi * h1 * k12;
            if lo_obj < hi_obj - 1e-12 {
                lo
            } else if lo_obj > hi_obj + 1e-12 {
                hi
            } else {
                a2_old
            }
        };
        if a2 < 1e-10 {
            a2 = 0.0;
        } else if a2 > c - 1e-10 {
            a2 = c;
        }
        if (a2 - a2_old).abs() < 1e-10 * (a2 + a2_old + 1e-10) {
            return false;
        }
        let a1 = a1_old + s * (a2_old - a2);
        let a1 = a1.clamp(0.0, c);

        let d1 = y1 * (a1 - a1_old);
        let d2 = y2 * (a2 - a2_old);
        let b1 = *bias - e1 - d1 * k11 - d2 * k12;
        let b2 = *bias - e2 - d1 * k12 - d2 * k22;
        let new_bias = if a1 > 0.0 && a1 < c {
            b1
        } else if a2 > 0.0 && a2 < c {
            b2
        } else {
            (b1 + b2) / 2.0
        };
        let db = new_bias - *bias;
        for k in 0..n {
            err[k] += d1 * gram[i1 * n + k] + d2 * gram[i2 * n + k] + db;
        }
        alpha[i1] = a1;
        alpha[i2] = a2;
        *bias = new_bias;
        true
    };

    let mut sweeps = 0;
    let mut examine_all = true;
    loop {
        sweeps += 1;
        if sweeps > max_sweeps {
            break;
        }
        let mut num_changed = 0;
        let candidates: Vec<usize> = if examine_all {
            (0..n).collect()
        } else {
            (0..n)
                .filter(|&i| alpha[i] > 0.0 && alpha[i] < c)
                .collect()
        };
        for &i2 in &candidates {
            let e2 = err[i2];
            let r2 = e2 * ys[i2];
            let violates = (r2 < -tol && alpha[i2] < c) || (r2 > tol && alpha[i2] > 0.0);
            if !violates {
                continue;
            }
            // Second-choice heuristic: largest |E1 − E2| among non-bound
            // points, smallest index on ties; then ascending scans.
            let mut best: Option<(usize, f64)> = None;
            for i1 in 0..n {
                if i1 == i2 || alpha[i1] <= 0.0 || alpha[i1] >= c {
                    continue;
                }
                let gap = (err[i1] - e2).abs();
                if best.map_or(true, |(_, g)| gap > g) {
                    best = Some((i1, gap));
                }
            }
            let mut stepped = false;
            if let Some((i1, _)) = best {
                stepped = take_step(i1, i2, &mut alpha, &mut bias, &mut err);
            }
            if !stepped {
                for i1 in 0..n {
                    if i1 == i2 || alpha[i1] <= 0.0 || alpha[i1] >= c {
                        continue;
                    }
                    if take_step(i1, i2, &mut alpha, &mut bias, &mut err) {
                        stepped = true;
                        break;
                    }
                }
            }
            if !stepped {
                for i1 in 0..n {
                    if i1 == i2 {
                        continue;
                    }
                    if take_step(i1, i2, &mut alpha, &mut bias, &mut err) {
                        stepped = true;
                        break;
                    }
                }
            }
            if stepped {
                num_changed += 1;
            }
        }
        if examine_all {
            if num_changed == 0 {
                break;
            }
            examine_all = false;
        } else if num_changed == 0 {
            examine_all = true;
        }
    }

    // Fold labels into alpha so the solution is self-contained.
    let signed: Vec<f64> = alpha.iter().zip(ys).map(|(&a, &y)| a * y).collect();
    Ok(SmoSolution {
        alpha: signed,
        bias,
        sweeps,
    })
}

/// Fits the two-parameter calibration sigmoid P = 1/(1+exp(a·d + b)) by
/// regularized maximum likelihood with smoothed targets, via damped Newton.
fn fit_platt(decisions: &[f64], labels01: &[f64]) -> (f64, f64) {
    let n = decisions.len();
    let prior1 = labels01.iter().filter(|&&y| y == 1.0).count() as f64;
    let prior0 = n as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = labels01
        .iter()
        .map(|&y| if y == 1.0 { hi } else { lo })
        .collect();

    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let objective = |a: f64, b: f64| -> f64 {
        let mut obj = 0.0;
        for (&d, &ti) in decisions.iter().zip(&t) {
            let z = a * d + b;
            // −[t·ln p + (1−t)·ln(1−p)] with p = σ(−z), written stably.
            obj += if z >= 0.0 {
                ti * z + (1.0 + (-z).exp()).ln()
            } else {
                (ti - 1.0) * z + (1.0 + z.exp()).ln()
            };
        }
        obj
    };

    let mut fval = objective(a, b);
    for _ in 0..200 {
        // Gradient and Hessian of the calibration likelihood.
        let (mut g_a, mut g_b) = (0.0, 0.0);
        let (mut h11, mut h22, mut h12) = (1e-12, 1e-12, 0.0);
        for (&d, &ti) in decisions.iter().zip(&t) {
            let z = a * d + b;
            let p = sigmoid(-z);
            let w = p * (1.0 - p);
            g_a += d * (ti - p);
            g_b += ti - p;
            h11 += d * d * w;
            h22 += w;
            h12 += d * w;
        }
        if g_a.abs() < 1e-10 && g_b.abs() < 1e-10 {
            break;
        }
        let det = h11 * h22 - h12 * h12;
        let da = -(h22 * g_a - h12 * g_b) / det;
        let db = -(h11 * g_b - h12 * g_a) / det;
        let mut step = 1.0;
        loop {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-12 {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                return (a, b);
            }
        }
    }
    (a, b)
}
