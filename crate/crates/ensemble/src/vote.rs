use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use sleepcast_core::container;
use sleepcast_core::data::UserDay;

use crate::classifier::{fit, ClassifierKind, EnsembleParams, TrainedClassifier};
use crate::{EnsembleError, Result};

pub const BUNDLE_KIND: &str = "ensemble-bundle";
pub const BUNDLE_VERSION: u32 = 1;

/// Mean member probability and its label (1 iff the mean exceeds 0.5).
pub fn soft_vote_probs(p1s: &[f64]) -> Result<(f64, u8)> {
    if p1s.is_empty() {
        return Err(EnsembleError::Input("soft vote over no members".into()));
    }
    let avg = p1s.iter().sum::<f64>() / p1s.len() as f64;
    Ok((avg, u8::from(avg > 0.5)))
}

pub fn soft_vote(members: &[TrainedClassifier], x: ArrayView1<f64>) -> Result<(f64, u8)> {
    let p1s = members
        .iter()
        .map(|m| m.predict_proba(x).map(|p| p[1]))
        .collect::<Result<Vec<_>>>()?;
    soft_vote_probs(&p1s)
}

/// Majority label; an even split gives 0.
pub fn hard_vote(labels: &[u8]) -> Result<u8> {
    if labels.is_empty() {
        return Err(EnsembleError::Input("hard vote over no labels".into()));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    Ok(u8::from(2 * ones > labels.len()))
}

/// Rows of daily statistics with one binary column per target label.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    pub keys: Vec<UserDay>,
    pub x: Array2<f64>,
    /// `y[i][l]` is label `l` of row `i`.
    pub y: Vec<Vec<u8>>,
    pub label_names: Vec<String>,
}

impl TabularDataset {
    pub fn new(keys: Vec<UserDay>, x: Array2<f64>, y: Vec<Vec<u8>>, label_names: Vec<String>) -> Result<Self> {
        if keys.len() != x.nrows() || y.len() != x.nrows() {
            return Err(EnsembleError::Input("keys, features and labels disagree on row count".into()));
        }
        if y.iter().any(|r| r.len() != label_names.len()) {
            return Err(EnsembleError::Input("label rows disagree with label names".into()));
        }
        Ok(Self { keys, x, y, label_names })
    }

    pub fn label_column(&self, l: usize) -> Vec<u8> {
        self.y.iter().map(|r| r[l]).collect()
    }
}

/// The six fitted families for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingEnsemble {
    pub label: String,
    pub members: Vec<TrainedClassifier>,
}

impl VotingEnsemble {
    pub fn fit(label: &str, x: &Array2<f64>, y: &[u8], params: &EnsembleParams) -> Result<Self> {
        let members = ClassifierKind::ALL
            .iter()
            .map(|&kind| {
                fit(kind, x, y, params).map_err(|e| EnsembleError::Member {
                    label: label.to_string(),
                    kind: kind.to_string(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            label: label.to_string(),
            members,
        })
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Result<(f64, u8)> {
        soft_vote(&self.members, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub n_features: usize,
    pub n_train_rows: usize,
    pub params: EnsembleParams,
}

/// One independent voting ensemble per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiOutputModel {
    pub meta: BundleMeta,
    pub ensembles: Vec<VotingEnsemble>,
}

/// Fits every label's ensemble; labels are fitted in parallel and each sees
/// the same seed, so results do not depend on label order.
pub fn fit_multi_output(data: &TabularDataset, params: &EnsembleParams) -> Result<MultiOutputModel> {
    params.validate()?;
    let ensembles = std::thread::scope(|s| {
        let handles: Vec<_> = data
            .label_names
            .iter()
            .enumerate()
            .map(|(l, name)| {
                let y = data.label_column(l);
                s.spawn(move || VotingEnsemble::fit(name, &data.x, &y, params))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ensemble fitting thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(MultiOutputModel {
        meta: BundleMeta {
            n_features: data.x.ncols(),
            n_train_rows: data.x.nrows(),
            params: params.clone(),
        },
        ensembles,
    })
}

impl MultiOutputModel {
    pub fn label_names(&self) -> Vec<&str> {
        self.ensembles.iter().map(|e| e.label.as_str()).collect()
    }

    /// Soft-vote `(p1, label)` for every label.
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<Vec<(f64, u8)>> {
        self.ensembles.iter().map(|e| e.predict(x)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(container::save(path, BUNDLE_KIND, BUNDLE_VERSION, self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(container::load(path, BUNDLE_KIND, BUNDLE_VERSION)?)
    }
}
