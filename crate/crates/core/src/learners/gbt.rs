//! Gradient-boosted decision trees for binary targets, trained on the
//! second-order expansion of the logistic loss.
//!
//! Each round fits a regression tree to the current gradient/curvature
//! statistics; leaf weights solve the per-leaf quadratic exactly
//! (w = −G/(H+λ)) and a split is kept only when its gain
//! ½·[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G_P²/(H_P+λ)] exceeds the pruning
//! threshold γ. Split scans are exact: every boundary between adjacent
//! distinct sorted values is evaluated.

use serde::{Deserialize, Serialize};

use crate::data::FactorTable;
use crate::error::{Error, Result};
use crate::learners::logistic::sigmoid;

/// Boosting settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtConfig {
    pub n_estimators: usize,
    /// Shrinkage applied to every leaf weight.
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum gain γ required to keep a split.
    pub gamma: f64,
    /// L2 penalty λ on leaf weights.
    pub lambda: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            n_estimators: 150,
            learning_rate: 0.1,
            max_depth: 15,
            gamma: 0.08,
            lambda: 1.0,
        }
    }
}

/// Regression-tree node; samples with `value < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        weight: f64,
    },
    Split {
        factor: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn evaluate(&self, sample: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { weight } => *weight,
            TreeNode::Split {
                factor,
                threshold,
                left,
                right,
            } => {
                if sample[*factor] < *threshold {
                    left.evaluate(sample)
                } else {
                    right.evaluate(sample)
                }
            }
        }
    }

    fn leaves(&self, out: &mut Vec<f64>) {
        match self {
            TreeNode::Leaf { weight } => out.push(*weight),
            TreeNode::Split { left, right, .. } => {
                left.leaves(out);
                right.leaves(out);
            }
        }
    }
}

/// Trained boosted ensemble. Leaf weights already include shrinkage, so the
/// margin is `base_score + Σ tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// Log-odds of the training base rate.
    pub base_score: f64,
    pub trees: Vec<TreeNode>,
    /// Training log-loss after each round (round 0 = base score only).
    pub train_objective: Vec<f64>,
    n_factors: usize,
}

impl GbtModel {
    pub fn n_factors(&self) -> usize {
        self.n_factors
    }

    /// Raw additive score before the sigmoid.
    pub fn margin(&self, sample: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| t.evaluate(sample))
                .sum::<f64>()
    }

    pub fn predict(&self, sample: &[f64]) -> f64 {
        sigmoid(self.margin(sample))
    }

    /// Flattened leaf weights of every tree, in depth-first order.
    pub fn leaf_weights(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for t in &self.trees {
            t.leaves(&mut out);
        }
        out
    }
}

struct SplitChoice {
    factor: usize,
    threshold: f64,
    gain: f64,
    left_rows: Vec<usize>,
    right_rows: Vec<usize>,
}

/// Trains a boosted-tree classifier on a labeled table.
pub fn train_gbt(table: &FactorTable, config: &GbtConfig) -> Result<GbtModel> {
    let (xs, ys) = super::design_from_table(table)?;
    if config.n_estimators == 0 {
        return Err(Error::InvalidArgument("n_estimators must be ≥ 1".into()));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            config.learning_rate
        )));
    }
    if !(config.lambda >= 0.0) || !(config.gamma >= 0.0) {
        return Err(Error::InvalidArgument(
            "gamma and lambda must be non-negative".into(),
        ));
    }
    let n = xs.len();
    let base_rate = ys.iter().sum::<f64>() / n as f64;
    let base_score = (base_rate / (1.0 - base_rate)).ln();

    let mut margins = vec![base_score; n];
    let log_loss = |margins: &[f64]| -> f64 {
        margins
            .iter()
            .zip(&ys)
            .map(|(&m, &y)| {
                // −[y ln p + (1−y) ln(1−p)] in a softplus form.
                let sp = if m > 0.0 {
                    m + (-m).exp().ln_1p()
                } else {
                    m.exp().ln_1p()
                };
                sp - y * m
            })
            .sum::<f64>()
            / n as f64
    };

    let mut trees = Vec::with_capacity(config.n_estimators);
    let mut train_objective = vec![log_loss(&margins)];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..config.n_estimators {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - ys[i];
            hess[i] = p * (1.0 - p);
        }
        let rows: Vec<usize> = (0..n).collect();
        let tree = build_node(&xs, &grad, &hess, rows, 0, config);
        for i in 0..n {
            margins[i] += tree.evaluate(&xs[i]);
        }
        train_objective.push(log_loss(&margins));
        trees.push(tree);
    }

    Ok(GbtModel {
        base_score,
        trees,
        train_objective,
        n_factors: xs[0].len(),
    })
}

fn build_node(
    xs: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    rows: Vec<usize>,
    depth: usize,
    config: &GbtConfig,
) -> TreeNode {
    let g: f64 = rows.iter().map(|&i| grad[i]).sum();
    let h: f64 = rows.iter().map(|&i| hess[i]).sum();
    let leaf = |g: f64, h: f64| TreeNode::Leaf {
        weight: config.learning_rate * (-g / (h + config.lambda)),
    };
    if depth >= config.max_depth || rows.len() < 2 {
        return leaf(g, h);
    }

    let parent_term = g * g / (h + config.lambda);
    let n_factors = xs[0].len();
    let mut best: Option<SplitChoice> = None;
    let mut order = rows.clone();
    for factor in 0..n_factors {
        // Deterministic ordering: by value, then by row index.
        order.sort_unstable_by(|&a, &b| {
            xs[a][factor]
                .total_cmp(&xs[b][factor])
                .then(a.cmp(&b))
        });
        let mut gl = 0.0;
        let mut hl = 0.0;
        for pos in 1..order.len() {
            let prev = order[pos - 1];
            gl += grad[prev];
            hl += hess[prev];
            if xs[prev][factor] == xs[order[pos]][factor] {
                continue; // no boundary inside a tied run
            }
            let gr = g - gl;
            let hr = h - hl;
            let gain = 0.5
                * (gl * gl / (hl + config.lambda) + gr * gr / (hr + config.lambda)
                    - parent_term);
            if gain > best.as_ref().map_or(config.gamma, |b| b.gain) {
                best = Some(SplitChoice {
                    factor,
                    threshold: (xs[prev][factor] + xs[order[pos]][factor]) / 2.0,
                    gain,
                    left_rows: order[..pos].to_vec(),
                    right_rows: order[pos..].to_vec(),
                });
            }
        }
    }

    match best {
        None => leaf(g, h),
        Some(choice) => TreeNode::Split {
            factor: choice.factor,
            threshold: choice.threshold,
            left: Box::new(build_node(xs, grad, hess, choice.left_rows, depth + 1, config)),
            right: Box::new(build_node(
                xs,
                grad,
                hess,
                choice.right_rows,
                depth + 1,
                config,
            )),
        },
    }
}
