//! Six from-scratch binary classifiers (random forest, gradient boosting,
//! logistic regression, RBF SVM, decision tree, k-NN) and soft/hard voting
//! over them, one independent ensemble per target label.

pub mod boost;
pub mod classifier;
pub mod error;
pub mod forest;
pub mod knn;
pub mod logistic;
pub mod svm;
pub mod tree;
pub mod vote;

pub use classifier::{fit, impute_zeros, ClassifierKind, EnsembleParams, Model, TrainedClassifier};
pub use error::{EnsembleError, Result};
pub use vote::{
    fit_multi_output, hard_vote, soft_vote, soft_vote_probs, MultiOutputModel, TabularDataset, VotingEnsemble,
};
