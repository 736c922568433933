//! Exhaustive hyperparameter search over fixed candidate grids, scored by
//! stratified cross-validated AUC.
//!
//! Everything here is deterministic: candidates are evaluated in grid
//! order, fold assignment is a seeded shuffle, and ties on mean AUC keep
//! the earliest candidate.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FactorTable;
use crate::error::{Error, Result};
use crate::evaluation::roc_auc;
use crate::learners::gbt::{train_gbt, GbtConfig};
use crate::learners::logistic::{train_logistic, LogisticConfig, Penalty};
use crate::learners::svm::{train_svm, KernelSpec, SvmConfig};
use crate::learners::{ModelKind, TrainedModel};
use crate::neural::{train_cnn, train_lstm, Activation, CnnConfig, LstmConfig};

/// Regularization grid shared by the logistic and SVM searches.
pub const C_VALUES: [f64; 7] = [0.1, 1.0, 5.0, 10.0, 50.0, 100.0, 180.0];

/// One hyperparameter combination for any model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum CandidateConfig {
    Logistic(LogisticConfig),
    Svm(SvmConfig),
    Gbt(GbtConfig),
    Cnn(CnnConfig),
    Lstm(LstmConfig),
}

impl CandidateConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            CandidateConfig::Logistic(_) => ModelKind::Lr,
            CandidateConfig::Svm(_) => ModelKind::Svm,
            CandidateConfig::Gbt(_) => ModelKind::Gbt,
            CandidateConfig::Cnn(_) => ModelKind::Cnn,
            CandidateConfig::Lstm(_) => ModelKind::Lstm,
        }
    }

    /// Short human-readable summary for search reports.
    pub fn describe(&self) -> String {
        match self {
            CandidateConfig::Logistic(c) => {
                let p = match c.penalty {
                    Penalty::L1 => "l1",
                    Penalty::L2 => "l2",
                };
                format!("lr C={} penalty={p}", c.c)
            }
            CandidateConfig::Svm(c) => {
                let k = match c.kernel {
                    KernelSpec::Linear => "linear".to_string(),
                    KernelSpec::Poly { degree, .. } => format!("poly{degree}"),
                    KernelSpec::Rbf { sigma: None } => "rbf".to_string(),
                    KernelSpec::Rbf { sigma: Some(s) } => format!("rbf sigma={s}"),
                };
                format!("svm C={} kernel={k}", c.c)
            }
            CandidateConfig::Gbt(c) => format!(
                "gbt trees={} lr={} depth={}",
                c.n_estimators, c.learning_rate, c.max_depth
            ),
            CandidateConfig::Cnn(c) => format!(
                "cnn filters={} kernel={} dropout={} activation={:?}",
                c.filters, c.kernel_width, c.dropout, c.activation
            ),
            CandidateConfig::Lstm(c) => format!(
                "lstm units={} dropout={} activation={:?}",
                c.units, c.dropout, c.activation
            ),
        }
    }
}

/// Trains one candidate on a labeled table.
pub fn train_candidate(table: &FactorTable, config: &CandidateConfig) -> Result<TrainedModel> {
    Ok(match config {
        CandidateConfig::Logistic(c) => TrainedModel::Logistic(train_logistic(table, c)?),
        CandidateConfig::Svm(c) => TrainedModel::Svm(train_svm(table, c)?),
        CandidateConfig::Gbt(c) => TrainedModel::Gbt(train_gbt(table, c)?),
        CandidateConfig::Cnn(c) => TrainedModel::Cnn(train_cnn(table, c)?),
        CandidateConfig::Lstm(c) => TrainedModel::Lstm(train_lstm(table, c)?),
    })
}

/// The default search space for each model family. Grid order is the
/// published listing order, which is also the tie-breaking order.
pub fn default_grid(kind: ModelKind) -> Vec<CandidateConfig> {
    let mut grid = Vec::new();
    match kind {
        ModelKind::Lr => {
            for &c in &C_VALUES {
                for penalty in [Penalty::L1, Penalty::L2] {
                    grid.push(CandidateConfig::Logistic(LogisticConfig {
                        c,
                        penalty,
                        ..LogisticConfig::default()
                    }));
                }
            }
        }
        ModelKind::Svm => {
            for &c in &C_VALUES {
                for kernel in [
                    KernelSpec::Linear,
                    KernelSpec::Poly {
                        degree: 3,
                        coef0: 1.0,
                    },
                    KernelSpec::Rbf { sigma: None },
                ] {
                    grid.push(CandidateConfig::Svm(SvmConfig {
                        c,
                        kernel,
                        ..SvmConfig::default()
                    }));
                }
            }
        }
        ModelKind::Gbt => {
            for n_estimators in [50, 100, 150, 200] {
                for learning_rate in [0.01, 0.1] {
                    for max_depth in [2, 5, 10, 15, 20] {
                        grid.push(CandidateConfig::Gbt(GbtConfig {
                            n_estimators,
                            learning_rate,
                            max_depth,
                            ..GbtConfig::default()
                        }));
                    }
                }
            }
        }
        ModelKind::Cnn => {
            for filters in [16, 32, 64, 128] {
                for kernel_width in [3, 5, 7] {
                    for dropout in [0.1, 0.2, 0.3] {
                        for activation in [Activation::Relu, Activation::Tanh] {
                            grid.push(CandidateConfig::Cnn(CnnConfig {
                                filters,
                                kernel_width,
                                dropout,
                                activation,
                                ..CnnConfig::default()
                            }));
                        }
                    }
                }
            }
        }
        ModelKind::Lstm => {
            for units in [50, 100, 200, 300] {
                for dropout in [0.1, 0.2, 0.3] {
                    for activation in [Activation::Relu, Activation::Tanh] {
                        grid.push(CandidateConfig::Lstm(LstmConfig {
                            units,
                            dropout,
                            activation,
                            ..LstmConfig::default()
                        }));
                    }
                }
            }
        }
    }
    grid
}

/// Stratified fold assignment over 0/1 labels: within each class, indices
/// are shuffled by a seeded generator and dealt round-robin, so every fold
/// holds at least one sample of each class. Folds come back sorted.
pub fn stratified_folds_from_labels(
    labels: &[u8],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs at least 2 folds, got {k}"
        )));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by_class[usize::from(y == 1)].push(i);
    }
    for class in &by_class {
        if class.len() < k {
            return Err(Error::InvalidArgument(format!(
                "a class has only {} samples; {k}-fold stratification needs at least {k} per class",
                class.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for class in &mut by_class {
        class.shuffle(&mut rng);
        for (pos, &i) in class.iter().enumerate() {
            folds[pos % k].push(i);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Stratified folds for a labeled factor table.
pub fn stratified_folds(table: &FactorTable, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let labels = table
        .labels()
        .ok_or_else(|| Error::Labels("cross-validation requires labels".into()))?;
    stratified_folds_from_labels(labels, k, seed)
}

/// One evaluated grid candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub config: CandidateConfig,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
}

/// Full search trace plus the winning index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub points: Vec<GridPoint>,
    pub best_index: usize,
}

impl SearchReport {
    pub fn best(&self) -> &GridPoint {
        &self.points[self.best_index]
    }
}

/// Evaluates every candidate by k-fold stratified cross-validation and
/// returns the full trace; the best point is the first one achieving the
/// highest mean held-out AUC.
pub fn grid_search(
    table: &FactorTable,
    candidates: &[CandidateConfig],
    k: usize,
    seed: u64,
) -> Result<SearchReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty candidate grid".into()));
    }
    let labels = table
        .labels()
        .ok_or_else(|| Error::Labels("grid search requires labels".into()))?
        .to_vec();
    let folds = stratified_folds_from_labels(&labels, k, seed)?;
    let splits: Vec<(FactorTable, FactorTable, Vec<u8>)> = folds
        .iter()
        .map(|fold| {
            let mut held = vec![false; labels.len()];
            for &i in fold {
                held[i] = true;
            }
            let train_rows: Vec<usize> =
                (0..labels.len()).filter(|&i| !held[i]).collect();
            let train = table.select_rows(&train_rows);
            let test = table.select_rows(fold);
            let test_labels: Vec<u8> = fold.iter().map(|&i| labels[i]).collect();
            (train, test, test_labels)
        })
        .collect();

    let mut points = Vec::with_capacity(candidates.len());
    let mut best_index = 0;
    for (idx, candidate) in candidates.iter().enumerate() {
        let mut fold_aucs = Vec::with_capacity(k);
        for (train, test, test_labels) in &splits {
            let model = train_candidate(train, candidate)?;
            let scores = model.predict_batch(test);
            fold_aucs.push(roc_auc(&scores, test_labels)?);
        }
        let mean_auc = fold_aucs.iter().sum::<f64>() / fold_aucs.len() as f64;
        points.push(GridPoint {
            config: candidate.clone(),
            fold_aucs,
            mean_auc,
        });
        if mean_auc > points[best_index].mean_auc {
            best_index = idx;
        }
    }
    Ok(SearchReport { points, best_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FactorMeta;

    fn table(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> FactorTable {
        let names: Vec<String> = (0..rows[0].len()).map(|j| format!("f{j}")).collect();
        let metas: Vec<FactorMeta> = names
            .iter()
            .map(|n| FactorMeta::continuous(n, false, ""))
            .collect();
        FactorTable::from_rows(metas, &rows, Some(labels)).unwrap()
    }

    #[test]
    fn regularization_grid_is_verbatim() {
        assert_eq!(C_VALUES, [0.1, 1.0, 5.0, 10.0, 50.0, 100.0, 180.0]);
    }

    #[test]
    fn default_grid_sizes_and_order() {
        assert_eq!(default_grid(ModelKind::Lr).len(), 14);
        assert_eq!(default_grid(ModelKind::Svm).len(), 21);
        assert_eq!(default_grid(ModelKind::Gbt).len(), 40);
        assert_eq!(default_grid(ModelKind::Cnn).len(), 72);
        assert_eq!(default_grid(ModelKind::Lstm).len(), 24);

        // C varies slowest, penalty fastest; every point keeps defaults
        // for the unsearched knobs.
        let lr = default_grid(ModelKind::Lr);
        match (&lr[0], &lr[1], &lr[2]) {
            (
                CandidateConfig::Logistic(a),
                CandidateConfig::Logistic(b),
                CandidateConfig::Logistic(c),
            ) => {
                assert_eq!((a.c, a.penalty), (0.1, Penalty::L1));
                assert_eq!((b.c, b.penalty), (0.1, Penalty::L2));
                assert_eq!((c.c, c.penalty), (1.0, Penalty::L1));
            }
            _ => panic!("lr grid holds non-logistic candidates"),
        }
        let gbt = default_grid(ModelKind::Gbt);
        match &gbt[39] {
            CandidateConfig::Gbt(c) => {
                assert_eq!(
                    (c.n_estimators, c.learning_rate, c.max_depth),
                    (200, 0.1, 20)
                );
                assert_eq!(c.gamma, GbtConfig::default().gamma);
            }
            _ => panic!("gbt grid holds non-gbt candidates"),
        }
    }

    #[test]
    fn folds_are_stratified_disjoint_and_deterministic() {
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let folds = stratified_folds_from_labels(&labels, 3, 7).unwrap();
        assert_eq!(folds.len(), 3);
        let mut seen = vec![false; labels.len()];
        for fold in &folds {
            assert_eq!(fold.len(), 4);
            let pos = fold.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(pos, 2, "fold {fold:?} is not stratified");
            for &i in fold {
                assert!(!seen[i], "index {i} assigned twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(folds, stratified_folds_from_labels(&labels, 3, 7).unwrap());
        assert_ne!(folds, stratified_folds_from_labels(&labels, 3, 8).unwrap());
    }

    #[test]
    fn folds_reject_thin_classes() {
        assert!(stratified_folds_from_labels(&[0, 0, 0, 1, 1], 3, 0).is_err());
        assert!(stratified_folds_from_labels(&[0, 1], 1, 0).is_err());
    }

    fn linear_table() -> FactorTable {
        let rows: Vec<Vec<f64>> = (0..24).map(|i| vec![i as f64 - 11.5]).collect();
        let labels: Vec<u8> = (0..24).map(|i| u8::from(i >= 12)).collect();
        table(rows, labels)
    }

    #[test]
    fn single_candidate_grid_reports_it_as_best() {
        let t = linear_table();
        let grid = vec![CandidateConfig::Logistic(LogisticConfig::default())];
        let report = grid_search(&t, &grid, 3, 0).unwrap();
        assert_eq!(report.points.len(), 1);
        assert_eq!(report.best_index, 0);
        assert_eq!(report.best().fold_aucs.len(), 3);
        assert!(report.best().mean_auc > 0.9);
    }

    #[test]
    fn search_prefers_the_model_that_fits() {
        // Exclusive-or layout: no linear separator exists, so the boosted
        // trees should win the grid.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let j = (i as f64 - 4.5) / 20.0;
            rows.push(vec![1.0 + j, 1.0 - j]);
            labels.push(1u8);
            rows.push(vec![-1.0 + j, -1.0 - j]);
            labels.push(1u8);
            rows.push(vec![1.0 + j, -1.0 + j]);
            labels.push(0u8);
            rows.push(vec![-1.0 - j, 1.0 + j]);
            labels.push(0u8);
        }
        let t = table(rows, labels);
        let grid = vec![
            CandidateConfig::Logistic(LogisticConfig::default()),
            CandidateConfig::Gbt(GbtConfig {
                n_estimators: 30,
                learning_rate: 0.3,
                max_depth: 3,
                gamma: 0.0,
                lambda: 1.0,
            }),
        ];
        let report = grid_search(&t, &grid, 4, 1).unwrap();
        assert_eq!(report.best_index, 1, "{:?}", report.points.iter().map(|p| p.mean_auc).collect::<Vec<_>>());
        assert!(report.best().mean_auc > 0.8);
    }

    #[test]
    fn ties_keep_the_earliest_candidate() {
        let t = linear_table();
        // Two strong candidates that both reach AUC 1.0 on every fold.
        let grid = vec![
            CandidateConfig::Logistic(LogisticConfig {
                c: 50.0,
                penalty: Penalty::L1,
                ..LogisticConfig::default()
            }),
            CandidateConfig::Logistic(LogisticConfig {
                c: 50.0,
                penalty: Penalty::L2,
                ..LogisticConfig::default()
            }),
        ];
        let report = grid_search(&t, &grid, 3, 0).unwrap();
        assert_eq!(report.points[0].mean_auc, report.points[1].mean_auc);
        assert_eq!(report.best_index, 0);
    }

    #[test]
    fn descriptions_cover_every_family() {
        for kind in [
            ModelKind::Lr,
            ModelKind::Svm,
            ModelKind::Gbt,
            ModelKind::Cnn,
            ModelKind::Lstm,
        ] {
            let grid = default_grid(kind);
            for candidate in &grid {
                assert_eq!(candidate.kind(), kind);
                assert!(candidate.describe().starts_with(kind.as_str()));
            }
        }
    }
}
