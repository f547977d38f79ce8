//! CART trees: Gini classification trees and squared-error regression trees.

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// For classification trees `value` is the class-1 fraction of the
    /// training rows in the leaf; for regression trees it is the output.
    Leaf { value: f64 },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, x: ArrayView1<f64>) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn set_leaf(&mut self, i: usize, value: f64) {
        self.nodes[i] = Node::Leaf { value };
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Gini,
    SquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features drawn per split; `None` examines all, in column order.
    pub max_features: Option<usize>,
}

/// Running sums over a set of rows.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: f64,
    s1: f64,
    s2: f64,
}

impl Sums {
    fn add(&mut self, y: f64) {
        self.n += 1.0;
        self.s1 += y;
        self.s2 += y * y;
    }

    fn sub(&mut self, y: f64) {
        self.n -= 1.0;
        self.s1 -= y;
        self.s2 -= y * y;
    }

    /// Impurity times row count.
    fn weighted_impurity(&self, c: Criterion) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        match c {
            Criterion::Gini => 2.0 * self.s1 * (self.n - self.s1) / self.n,
            Criterion::SquaredError => (self.s2 - self.s1 * self.s1 / self.n).max(0.0),
        }
    }
}

struct Builder<'a, R> {
    x: &'a Array2<f64>,
    y: &'a [f64],
    params: TreeParams,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
}

/// Grows a tree on the rows listed in `rows` (duplicates allowed, as in a
/// bootstrap sample). `rng` is needed only when `max_features` is set.
pub fn grow<R: Rng>(x: &Array2<f64>, y: &[f64], rows: Vec<usize>, params: TreeParams, rng: Option<&mut R>) -> Tree {
    assert!(!rows.is_empty(), "cannot grow a tree on zero rows");
    let mut b = Builder {
        x,
        y,
        params,
        rng,
        nodes: Vec::new(),
    };
    b.build(rows, 0);
    Tree { nodes: b.nodes }
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mut sums = Sums::default();
        for &r in &rows {
            sums.add(self.y[r]);
        }
        let leaf_value = sums.s1 / sums.n;
        self.nodes.push(Node::Leaf { value: leaf_value });
        let pure = rows.iter().all(|&r| self.y[r] == self.y[rows[0]]);
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || rows.len() < self.params.min_samples_split {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, sums) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| self.x[[r, feature]] <= threshold);
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left: l,
            right: r,
        };
        id
    }

    fn best_split(&mut self, rows: &[usize], total: Sums) -> Option<(usize, f64)> {
        let d = self.x.ncols();
        let features: Vec<usize> = match (self.params.max_features, self.rng.as_deref_mut()) {
            // Examining every feature: keep column order so ties break as in
            // a plain tree.
            (Some(m), Some(rng)) if m < d => {
                let mut f: Vec<usize> = (0..d).collect();
                f.shuffle(rng);
                f
            }
            _ => (0..d).collect(),
        };
        let quota = self.params.max_features.unwrap_or(d).clamp(1, d);
        let crit = self.params.criterion;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = rows.to_vec();
        for (examined, &f) in features.iter().enumerate() {
            // Keep drawing past the quota until some feature can split.
            if examined >= quota && best.is_some() {
                break;
            }
            sorted.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]).then(a.cmp(&b)));
            let mut left = Sums::default();
            let mut right = total;
            for k in 0..sorted.len() - 1 {
                let yk = self.y[sorted[k]];
                left.add(yk);
                right.sub(yk);
                let (a, b) = (self.x[[sorted[k], f]], self.x[[sorted[k + 1], f]]);
                if a == b {
                    continue;
                }
                let score = left.weighted_impurity(crit) + right.weighted_impurity(crit);
                if best.is_none_or(|(s, _, _)| score < s) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some((score, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_chacha::ChaCha8Rng;

    fn params(c: Criterion) -> TreeParams {
        TreeParams {
            criterion: c,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
        }
    }

    #[test]
    fn xor_is_memorized() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [0.0, 1.0, 1.0, 0.0];
        let t = grow::<ChaCha8Rng>(&x, &y, (0..4).collect(), params(Criterion::Gini), None);
        for (i, row) in x.rows().into_iter().enumerate() {
            assert_eq!(t.value(row), y[i]);
        }
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn depth_limit_respected() {
        let x = Array2::from_shape_fn((32, 1), |(i, _)| i as f64);
        let y: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = TreeParams {
            max_depth: Some(3),
            ..params(Criterion::SquaredError)
        };
        let t = grow::<ChaCha8Rng>(&x, &y, (0..32).collect(), p, None);
        assert!(t.depth() <= 3);
        assert!(t.n_leaves() <= 8);
    }

    #[test]
    fn constant_features_give_a_leaf() {
        let x = Array2::from_elem((5, 2), 1.0);
        let y = [0.0, 1.0, 1.0, 0.0, 1.0];
        let t = grow::<ChaCha8Rng>(&x, &y, (0..5).collect(), params(Criterion::Gini), None);
        assert_eq!(t.nodes, vec![Node::Leaf { value: 0.6 }]);
    }

    #[test]
    fn threshold_separates_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let x = array![[a], [b]];
        let t = grow::<ChaCha8Rng>(&x, &[0.0, 1.0], vec![0, 1], params(Criterion::Gini), None);
        assert_eq!(t.value(x.row(0)), 0.0);
        assert_eq!(t.value(x.row(1)), 1.0);
    }
}
