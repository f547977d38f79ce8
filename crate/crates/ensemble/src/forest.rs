use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tree::{grow, Criterion, Tree, TreeParams};

/// Unpruned Gini tree; `predict_proba` is the leaf's class-1 fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub tree: Tree,
}

impl DecisionTree {
    pub fn fit(x: &Array2<f64>, y: &[u8], min_samples_split: usize) -> Self {
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let params = TreeParams {
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_split,
            max_features: None,
        };
        Self {
            tree: grow::<ChaCha8Rng>(x, &yf, (0..y.len()).collect(), params, None),
        }
    }

    pub fn p1(&self, x: ArrayView1<f64>) -> f64 {
        self.tree.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Features examined per split; `None` means floor(sqrt(d)).
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub seed: u64,
}

/// Bagged Gini trees. The class-1 probability is the fraction of trees
/// voting 1; a tree votes 1 when its leaf fraction exceeds 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

impl RandomForest {
    pub fn fit(x: &Array2<f64>, y: &[u8], p: &ForestParams) -> Self {
        let n = y.len();
        let d = x.ncols();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let max_features = p.max_features.unwrap_or(((d as f64).sqrt() as usize).max(1));
        let params = TreeParams {
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_split: p.min_samples_split,
            max_features: Some(max_features),
        };
        let trees = (0..p.n_trees)
            .map(|t| {
                // One generator stream per tree keeps trees independent of
                // each other's draws.
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
                rng.set_stream(t as u64);
                let rows = if p.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                grow(x, &yf, rows, params, Some(&mut rng))
            })
            .collect();
        Self { trees }
    }

    pub fn p1(&self, x: ArrayView1<f64>) -> f64 {
        let votes = self.trees.iter().filter(|t| t.value(x) > 0.5).count();
        votes as f64 / self.trees.len() as f64
    }
}
