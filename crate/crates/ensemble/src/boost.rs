use ndarray::{Array2, ArrayView1};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tree::{grow, Criterion, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub n_stages: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_split: usize,
}

/// Gradient boosting on the logistic loss with squared-error regression
/// trees and Newton leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub init: f64,
    /// Leaf values already include the learning rate.
    pub trees: Vec<Tree>,
    /// Mean training log-loss after the initial guess and after each stage.
    pub train_loss: Vec<f64>,
}

fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// `-log p(y | f)` for a logit `f`.
pub fn log_loss(y: f64, f: f64) -> f64 {
    let softplus = f.max(0.0) + (-f.abs()).exp().ln_1p();
    softplus - y * f
}

impl GradientBoosting {
    pub fn fit(x: &Array2<f64>, y: &[u8], p: &BoostParams) -> Self {
        let n = y.len();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let pos = yf.iter().sum::<f64>() / n as f64;
        let init = (pos / (1.0 - pos)).ln();
        let mut f = vec![init; n];
        let mean_loss = |f: &[f64]| yf.iter().zip(f).map(|(&y, &f)| log_loss(y, f)).sum::<f64>() / n as f64;
        let mut train_loss = vec![mean_loss(&f)];
        let params = TreeParams {
            criterion: Criterion::SquaredError,
            max_depth: Some(p.max_depth),
            min_samples_split: p.min_samples_split,
            max_features: None,
        };
        let mut trees = Vec::with_capacity(p.n_stages);
        for _ in 0..p.n_stages {
            let prob: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
            let resid: Vec<f64> = yf.iter().zip(&prob).map(|(y, p)| y - p).collect();
            let mut tree = grow::<ChaCha8Rng>(x, &resid, (0..n).collect(), params, None);
            let leaf_of: Vec<usize> = x.rows().into_iter().map(|r| tree.leaf_index(r)).collect();
            let mut members: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            for (i, &l) in leaf_of.iter().enumerate() {
                members.entry(l).or_default().push(i);
            }
            for (&leaf, rows) in &members {
                let num: f64 = rows.iter().map(|&i| resid[i]).sum();
                let den: f64 = rows.iter().map(|&i| prob[i] * (1.0 - prob[i])).sum();
                let newton = if den < 1e-150 { 0.0 } else { num / den };
                // Halve the shrunken step until the leaf's own loss does not
                // rise, so the total training loss is non-increasing.
                let leaf_loss = |delta: f64| rows.iter().map(|&i| log_loss(yf[i], f[i] + delta)).sum::<f64>();
                let base = leaf_loss(0.0);
                let mut step = p.learning_rate * newton;
                let mut tries = 0;
                while leaf_loss(step) > base {
                    step /= 2.0;
                    tries += 1;
                    if tries == 60 {
                        step = 0.0;
                        break;
                    }
                }
                tree.set_leaf(leaf, step);
            }
            for (i, &l) in leaf_of.iter().enumerate() {
                if let crate::tree::Node::Leaf { value } = tree.nodes[l] {
                    f[i] += value;
                }
            }
            train_loss.push(mean_loss(&f));
            trees.push(tree);
        }
        Self { init, trees, train_loss }
    }

    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        self.init + self.trees.iter().map(|t| t.value(x)).sum::<f64>()
    }

    pub fn p1(&self, x: ArrayView1<f64>) -> f64 {
        sigmoid(self.decision(x))
    }
}
