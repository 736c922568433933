//! Regularized logistic regression trained from scratch.
//!
//! The objective is the summed log-loss plus a penalty on the coefficients
//! (never the intercept), with penalty strength 1/C. L2 fits run plain
//! gradient descent with Armijo backtracking; L1 fits run cyclic coordinate
//! descent with a per-coordinate curvature bound and soft-thresholding, which
//! drives irrelevant coefficients to exact zeros.

use serde::{Deserialize, Serialize};

use crate::data::FactorTable;
use crate::error::{Error, Result};

/// Coefficient penalty kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

/// Logistic training settings. `c` is the inverse penalty strength, so
/// larger values regularize less.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub c: f64,
    pub penalty: Penalty,
    pub max_iter: usize,
    /// Convergence threshold on the largest coefficient change per pass.
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            c: 50.0,
            penalty: Penalty::L1,
            max_iter: 50_000,
            tol: 1e-8,
        }
    }
}

/// Fitted logistic model; `predict` is the sigmoid of the linear score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LogisticModel {
    /// Linear score before the sigmoid.
    pub fn decision(&self, sample: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(sample)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    pub fn predict(&self, sample: &[f64]) -> f64 {
        sigmoid(self.decision(sample))
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically safe ln(1 + e^z).
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Trains a logistic model on a labeled table.
pub fn train_logistic(table: &FactorTable, config: &LogisticConfig) -> Result<LogisticModel> {
    let (xs, ys) = super::design_from_table(table)?;
    if !(config.c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "penalty parameter c must be positive, got {}",
            config.c
        )));
    }
    let lambda = 1.0 / config.c;
    match config.penalty {
        Penalty::L1 => fit_l1(&xs, &ys, lambda, config),
        Penalty::L2 => fit_l2(&xs, &ys, lambda, config),
    }
}

/// Cyclic coordinate descent with soft-thresholding.
///
/// Each coordinate takes a bounded Newton step: the logistic curvature is at
/// most 1/4, so h_j = 0.25·Σx_ij² majorizes the true second derivative and
/// the thresholded update can never overshoot the penalized objective.
fn fit_l1(
    xs: &[Vec<f64>],
    ys: &[f64],
    lambda: f64,
    config: &LogisticConfig,
) -> Result<LogisticModel> {
    let n = xs.len();
    let f = xs[0].len();
    let mut intercept = 0.0;
    let mut beta = vec![0.0; f];
    let mut z = vec![0.0; n]; // linear scores, updated incrementally

    let mut h = vec![0.0; f];
    for (j, hj) in h.iter_mut().enumerate() {
        *hj = 0.25 * xs.iter().map(|x| x[j] * x[j]).sum::<f64>();
    }
    let h0 = 0.25 * n as f64;

    for _ in 0..config.max_iter {
        let mut max_delta: f64 = 0.0;

        for j in 0..f {
            if h[j] == 0.0 {
                continue; // all-zero column: coefficient stays 0
            }
            let mut g = 0.0;
            for i in 0..n {
                g += (sigmoid(z[i]) - ys[i]) * xs[i][j];
            }
            let u = beta[j] * h[j] - g;
            let new = soft_threshold(u, lambda) / h[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for i in 0..n {
                    z[i] += delta * xs[i][j];
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }

        let g0: f64 = z.iter().zip(ys).map(|(&zi, &yi)| sigmoid(zi) - yi).sum();
        let d0 = -g0 / h0;
        if d0 != 0.0 {
            for zi in z.iter_mut() {
                *zi += d0;
            }
            intercept += d0;
            max_delta = max_delta.max(d0.abs());
        }

        if max_delta < config.tol {
            return Ok(LogisticModel {
                intercept,
                coefficients: beta,
            });
        }
    }
    Ok(LogisticModel {
        intercept,
        coefficients: beta,
    })
}

#[inline]
fn soft_threshold(u: f64, lambda: f64) -> f64 {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

/// Full-gradient descent with Armijo backtracking on the smooth objective.
fn fit_l2(
    xs: &[Vec<f64>],
    ys: &[f64],
    lambda: f64,
    config: &LogisticConfig,
) -> Result<LogisticModel> {
    let n = xs.len();
    let f = xs[0].len();
    let mut w = vec![0.0; f + 1]; // intercept first

    let objective = |w: &[f64]| -> f64 {
        let mut obj = 0.0;
        for i in 0..n {
            let z = w[0] + dot(&w[1..], &xs[i]);
            obj += softplus(z) - ys[i] * z;
        }
        obj + 0.5 * lambda * dot(&w[1..], &w[1..])
    };
    let gradient = |w: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; f + 1];
        for i in 0..n {
            let z = w[0] + dot(&w[1..], &xs[i]);
            let r = sigmoid(z) - ys[i];
            g[0] += r;
            for j in 0..f {
                g[j + 1] += r * xs[i][j];
            }
        }
        for j in 0..f {
            g[j + 1] += lambda * w[j + 1];
        }
        g
    };

    let mut obj = objective(&w);
    let mut step = 1.0;
    for _ in 0..config.max_iter {
        let g = gradient(&w);
        let g_sq = dot(&g, &g);
        if g_sq == 0.0 {
            break;
        }
        // Backtrack until the Armijo sufficient-decrease test passes; grow
        // the trial step again afterwards so a conservative step does not
        // throttle every later pass.
        step *= 2.0;
        let (next, next_obj, used) = loop {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let trial_obj = objective(&trial);
            if trial_obj <= obj - 1e-4 * step * g_sq || step < 1e-18 {
                break (trial, trial_obj, step);
            }
            step *= 0.5;
        };
        let max_delta = w
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        w = next;
        obj = next_obj;
        step = used;
        if max_delta < config.tol {
            break;
        }
    }
    Ok(LogisticModel {
        intercept: w[0],
        coefficients: w[1..].to_vec(),
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
