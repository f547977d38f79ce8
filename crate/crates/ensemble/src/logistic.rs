use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams {
    /// L2 penalty on the weights (the intercept is not penalized).
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

/// L2-regularized logistic regression fitted by full-batch gradient descent
/// on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticRegression {
    /// Model with zero weights and intercept on unscaled inputs.
    pub fn zeros(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
            weights: vec![0.0; d],
            intercept: 0.0,
            iterations: 0,
        }
    }

    pub fn fit(x: &Array2<f64>, y: &[u8], p: &LogisticParams) -> Self {
        let (n, d) = x.dim();
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let scale: Array1<f64> = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        let z = (x - &mean) / &scale;
        let yf = Array1::from_iter(y.iter().map(|&v| f64::from(v)));
        // Lipschitz constant of the gradient: 0.25 * ||[Z 1]||^2 + lambda,
        // with the squared Frobenius norm bounding the spectral norm.
        let lip = 0.25 * (z.iter().map(|v| v * v).sum::<f64>() + n as f64) + p.lambda;
        let step = 1.0 / lip;
        let mut w = Array1::<f64>::zeros(d);
        let mut b = 0.0;
        let mut iterations = 0;
        for it in 0..p.max_iter {
            let resid = (z.dot(&w) + b).mapv(sigmoid) - &yf;
            let gw = z.t().dot(&resid) + &w * p.lambda;
            let gb = resid.sum();
            let gmax = gw.iter().fold(gb.abs(), |m, v| m.max(v.abs()));
            iterations = it;
            if gmax <= p.tol * n as f64 {
                break;
            }
            w.scaled_add(-step, &gw);
            b -= step * gb;
            iterations = it + 1;
        }
        Self {
            mean: mean.to_vec(),
            scale: scale.to_vec(),
            weights: w.to_vec(),
            intercept: b,
            iterations,
        }
    }

    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        let mut z = self.intercept;
        for j in 0..self.weights.len() {
            z += self.weights[j] * (x[j] - self.mean[j]) / self.scale[j];
        }
        z
    }

    pub fn p1(&self, x: ArrayView1<f64>) -> f64 {
        sigmoid(self.decision(x))
    }
}
