//! Parameterized building blocks and single-call forms of the ops.

use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{ConvSpec, Graph, SeqLayout, Var};
use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{shape_err, NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    Valid,
    Same,
}

/// Converts `c_out x c_in x k` kernels to the `(k * c_in) x c_out` matrix
/// used by [`Graph::conv1d`].
pub fn kernels_to_matrix(kernels: &Array3<f64>) -> Tensor {
    let (c_out, c_in, k) = kernels.dim();
    Array2::from_shape_fn((k * c_in, c_out), |(r, o)| kernels[[o, r % c_in, r / c_in]])
}

/// Cross-correlation of a single `T x c_in` sequence.
pub fn conv1d(input: &Tensor, kernels: &Array3<f64>, stride: usize, dilation: usize, padding: Padding) -> Result<Tensor> {
    let (_, c_in, k) = kernels.dim();
    if input.ncols() != c_in {
        return shape_err(format!("conv1d: input has {} channels, kernels expect {c_in}", input.ncols()));
    }
    let mut spec = match padding {
        Padding::Valid => ConvSpec::valid(k),
        Padding::Same => ConvSpec::same(k, dilation),
    };
    spec.stride = stride;
    spec.dilation = dilation;
    let mut g = Graph::new();
    let x = g.input(input.clone());
    let w = g.input(kernels_to_matrix(kernels));
    let y = g.conv1d(x, w, None, SeqLayout { batch: 1, len: input.nrows() }, spec)?;
    Ok(g.value(y).clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch normalization over feature columns with running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: String,
    pub beta: String,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, features: usize) -> Self {
        let gamma = format!("{name}.gamma");
        let beta = format!("{name}.beta");
        store.add(&gamma, Array2::ones((1, features)));
        store.add(&beta, Array2::zeros((1, features)));
        Self {
            gamma,
            beta,
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// In training mode the statistics come from the rows flagged in
    /// `stats_rows`; the returned batch statistics should then be folded
    /// into the running estimates with [`BatchNorm::update_running`].
    pub fn apply(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        mode: Mode,
        stats_rows: Option<&[bool]>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let gamma = g.param(store, store.id(&self.gamma));
        let beta = g.param(store, store.id(&self.beta));
        match mode {
            Mode::Train => {
                let (y, mean, var) = g.batch_norm_train(x, gamma, beta, stats_rows, self.eps)?;
                Ok((y, Some(BatchStats { mean, var })))
            }
            Mode::Eval => {
                let y = g.batch_norm_eval(x, gamma, beta, &self.running_mean, &self.running_var, self.eps)?;
                Ok((y, None))
            }
        }
    }

    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = (1.0 - m) * *r + m * b;
        }
    }

    pub fn forward(&mut self, store: &ParamStore, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let (y, stats) = self.apply(&mut g, store, xv, mode, None)?;
        if let Some(stats) = stats {
            self.update_running(&stats);
        }
        Ok(g.value(y).clone())
    }
}

/// Batch mean and unbiased batch variance per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// A dense layer `x W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: String,
    pub bias: String,
}

impl Dense {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let weight = format!("{name}.weight");
        let bias = format!("{name}.bias");
        store.add_uniform(&weight, inputs, outputs, inputs, rng);
        store.add_uniform(&bias, 1, outputs, inputs, rng);
        Self { weight, bias }
    }

    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, store.id(&self.weight));
        let b = g.param(store, store.id(&self.bias));
        g.linear(x, w, Some(b))
    }

    pub fn ids(&self, store: &ParamStore) -> (ParamId, ParamId) {
        (store.id(&self.weight), store.id(&self.bias))
    }
}

/// Multi-head self-attention with input and output projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub output: Dense,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d_model: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(NnError::Config(format!("d_model {d_model} not divisible by {heads} heads")));
        }
        Ok(Self {
            heads,
            query: Dense::new(store, &format!("{name}.q"), d_model, d_model, rng),
            key: Dense::new(store, &format!("{name}.k"), d_model, d_model, rng),
            value: Dense::new(store, &format!("{name}.v"), d_model, d_model, rng),
            output: Dense::new(store, &format!("{name}.out"), d_model, d_model, rng),
        })
    }

    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var, layout: SeqLayout, valid: &[bool]) -> Result<Var> {
        let q = self.query.apply(g, store, x)?;
        let k = self.key.apply(g, store, x)?;
        let v = self.value.apply(g, store, x)?;
        let a = g.attention(q, k, v, layout, self.heads, valid)?;
        self.output.apply(g, store, a)
    }
}

/// Self-attention over one `T x d` sequence; `pad_mask[t]` is true for real
/// positions.
pub fn multi_head_attention(store: &ParamStore, mha: &MultiHeadAttention, x: &Tensor, pad_mask: &[bool]) -> Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let y = mha.apply(&mut g, store, xv, SeqLayout { batch: 1, len: x.nrows() }, pad_mask)?;
    Ok(g.value(y).clone())
}
