use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::boost::{BoostParams, GradientBoosting};
use crate::forest::{DecisionTree, ForestParams, RandomForest};
use crate::knn::Knn;
use crate::logistic::{LogisticParams, LogisticRegression};
use crate::svm::{Svm, SvmParams};
use crate::{EnsembleError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    RandomForest,
    GradientBoosting,
    LogisticRegression,
    SupportVectorMachine,
    DecisionTree,
    KNearestNeighbors,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 6] = [
        ClassifierKind::RandomForest,
        ClassifierKind::GradientBoosting,
        ClassifierKind::LogisticRegression,
        ClassifierKind::SupportVectorMachine,
        ClassifierKind::DecisionTree,
        ClassifierKind::KNearestNeighbors,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::RandomForest => "random_forest",
            ClassifierKind::GradientBoosting => "gradient_boosting",
            ClassifierKind::LogisticRegression => "logistic_regression",
            ClassifierKind::SupportVectorMachine => "svm",
            ClassifierKind::DecisionTree => "decision_tree",
            ClassifierKind::KNearestNeighbors => "knn",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters for all six families. Defaults are the untuned
/// library-style settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleParams {
    pub rf_trees: usize,
    pub rf_bootstrap: bool,
    /// `None` means floor(sqrt(features)).
    pub rf_max_features: Option<usize>,
    pub tree_min_samples_split: usize,
    pub gb_stages: usize,
    pub gb_max_depth: usize,
    pub gb_learning_rate: f64,
    pub lr_lambda: f64,
    pub lr_tol: f64,
    pub lr_max_iter: usize,
    pub svm_c: f64,
    pub svm_gamma: Option<f64>,
    pub svm_eps: f64,
    pub svm_max_iter: usize,
    pub knn_k: usize,
    pub seed: u64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self {
            rf_trees: 100,
            rf_bootstrap: true,
            rf_max_features: None,
            tree_min_samples_split: 2,
            gb_stages: 100,
            gb_max_depth: 3,
            gb_learning_rate: 0.1,
            lr_lambda: 1.0,
            lr_tol: 1e-6,
            lr_max_iter: 10_000,
            svm_c: 1.0,
            svm_gamma: None,
            svm_eps: 1e-4,
            svm_max_iter: 1_000_000,
            knn_k: 5,
            seed: 42,
        }
    }
}

impl EnsembleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EnsembleError::Input(m.to_string()));
        if self.rf_trees == 0 || self.gb_stages == 0 || self.knn_k == 0 {
            return bad("tree counts, stage counts and k must be positive");
        }
        if self.tree_min_samples_split < 2 {
            return bad("tree_min_samples_split must be at least 2");
        }
        if self.rf_max_features == Some(0) {
            return bad("rf_max_features must be positive");
        }
        if !(self.gb_learning_rate > 0.0 && self.svm_c > 0.0 && self.lr_lambda >= 0.0 && self.svm_eps > 0.0) {
            return bad("learning rate, C and eps must be positive; lambda non-negative");
        }
        if self.svm_gamma.is_some_and(|g| !(g > 0.0)) {
            return bad("svm_gamma must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    GradientBoosting(GradientBoosting),
    LogisticRegression(LogisticRegression),
    Svm(Svm),
    Knn(Knn),
    /// Fitted on single-class data: always predicts `label` with certainty.
    Constant { label: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub kind: ClassifierKind,
    pub n_features: usize,
    pub model: Model,
}

/// Replaces missing (NaN) entries with 0.
pub fn impute_zeros(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| if v.is_nan() { 0.0 } else { v });
}

pub(crate) fn check_training_data(x: &Array2<f64>, y: &[u8]) -> Result<()> {
    if y.is_empty() {
        return Err(EnsembleError::Input("no training rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(EnsembleError::Input(format!("{} feature rows but {} labels", x.nrows(), y.len())));
    }
    if x.ncols() == 0 {
        return Err(EnsembleError::Input("no feature columns".into()));
    }
    if let Some(&bad) = y.iter().find(|&&v| v > 1) {
        return Err(EnsembleError::Input(format!("label {bad} is not binary")));
    }
    check_finite(x.rows().into_iter().flatten().copied(), x.ncols())
}

fn check_finite(values: impl Iterator<Item = f64>, d: usize) -> Result<()> {
    for (i, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(EnsembleError::NonFinite { column: i % d });
        }
    }
    Ok(())
}

pub fn fit(kind: ClassifierKind, x: &Array2<f64>, y: &[u8], params: &EnsembleParams) -> Result<TrainedClassifier> {
    params.validate()?;
    check_training_data(x, y)?;
    let n_features = x.ncols();
    let ones = y.iter().filter(|&&v| v == 1).count();
    let model = if ones == 0 || ones == y.len() {
        log::warn!("{kind}: training labels are all {}; fitting a constant classifier", y[0]);
        Model::Constant { label: y[0] }
    } else {
        match kind {
            ClassifierKind::DecisionTree => Model::DecisionTree(DecisionTree::fit(x, y, params.tree_min_samples_split)),
            ClassifierKind::RandomForest => Model::RandomForest(RandomForest::fit(
                x,
                y,
                &ForestParams {
                    n_trees: params.rf_trees,
                    bootstrap: params.rf_bootstrap,
                    max_features: params.rf_max_features,
                    min_samples_split: params.tree_min_samples_split,
                    seed: params.seed,
                },
            )),
            ClassifierKind::GradientBoosting => Model::GradientBoosting(GradientBoosting::fit(
                x,
                y,
                &BoostParams {
                    n_stages: params.gb_stages,
                    max_depth: params.gb_max_depth,
                    learning_rate: params.gb_learning_rate,
                    min_samples_split: params.tree_min_samples_split,
                },
            )),
            ClassifierKind::LogisticRegression => Model::LogisticRegression(LogisticRegression::fit(
                x,
                y,
                &LogisticParams {
                    lambda: params.lr_lambda,
                    tol: params.lr_tol,
                    max_iter: params.lr_max_iter,
                },
            )),
            ClassifierKind::SupportVectorMachine => Model::Svm(Svm::fit(
                x,
                y,
                &SvmParams {
                    c: params.svm_c,
                    gamma: params.svm_gamma,
                    eps: params.svm_eps,
                    max_iter: params.svm_max_iter,
                },
            )),
            ClassifierKind::KNearestNeighbors => Model::Knn(Knn::fit(x, y, params.knn_k)),
        }
    };
    Ok(TrainedClassifier { kind, n_features, model })
}

impl TrainedClassifier {
    pub fn new(kind: ClassifierKind, n_features: usize, model: Model) -> Self {
        Self { kind, n_features, model }
    }

    fn check_query(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() != self.n_features {
            return Err(EnsembleError::Input(format!(
                "query has {} features, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        check_finite(x.iter().copied(), self.n_features)
    }

    fn p1_unchecked(&self, x: ArrayView1<f64>) -> f64 {
        let p = match &self.model {
            Model::DecisionTree(m) => m.p1(x),
            Model::RandomForest(m) => m.p1(x),
            Model::GradientBoosting(m) => m.p1(x),
            Model::LogisticRegression(m) => m.p1(x),
            Model::Svm(m) => m.p1(x),
            Model::Knn(m) => m.p1(x),
            Model::Constant { label } => f64::from(*label),
        };
        p.clamp(0.0, 1.0)
    }

    /// `[p0, p1]`; errors on a wrong-length or non-finite query.
    pub fn predict_proba(&self, x: ArrayView1<f64>) -> Result<[f64; 2]> {
        self.check_query(x)?;
        let p1 = self.p1_unchecked(x);
        Ok([1.0 - p1, p1])
    }

    /// 1 iff p1 > 0.5. k-NN resolves an exact 0.5 by its nearest neighbour.
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<u8> {
        self.check_query(x)?;
        if let Model::Knn(m) = &self.model {
            return Ok(m.predict(x));
        }
        Ok(u8::from(self.p1_unchecked(x) > 0.5))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.model, Model::Constant { .. })
    }
}
