use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

/// k-nearest neighbours by squared Euclidean distance. Equal distances are
/// ranked by training row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub x: Array2<f64>,
    pub y: Vec<u8>,
}

impl Knn {
    pub fn fit(x: &Array2<f64>, y: &[u8], k: usize) -> Self {
        Self {
            k: k.clamp(1, y.len()),
            x: x.clone(),
            y: y.to_vec(),
        }
    }

    /// Indices of the k nearest training rows, nearest first.
    pub fn neighbors(&self, q: ArrayView1<f64>) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn p1(&self, q: ArrayView1<f64>) -> f64 {
        let nb = self.neighbors(q);
        nb.iter().filter(|&&i| self.y[i] == 1).count() as f64 / nb.len() as f64
    }

    /// Majority label; an even split goes to the nearest neighbour's label.
    pub fn predict(&self, q: ArrayView1<f64>) -> u8 {
        let nb = self.neighbors(q);
        let ones = nb.iter().filter(|&&i| self.y[i] == 1).count();
        match (2 * ones).cmp(&nb.len()) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => self.y[nb[0]],
        }
    }
}
