//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! A batch of `B` sequences of length `T` is laid out as a `(B*T) x d`
//! matrix; ops that need the sequence structure take a [`SeqLayout`].

use ndarray::{s, Array2, Axis, Zip};

use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{shape_err, NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeqLayout {
    pub batch: usize,
    pub len: usize,
}

impl SeqLayout {
    pub fn rows(&self) -> usize {
        self.batch * self.len
    }
}

/// Geometry of a 1-D convolution applied independently to every sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl ConvSpec {
    pub fn valid(kernel: usize) -> Self {
        Self {
            kernel,
            stride: 1,
            dilation: 1,
            pad_left: 0,
            pad_right: 0,
        }
    }

    /// Padding that keeps the length unchanged at stride 1. For an even
    /// span the extra column goes on the right.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        let total = dilation * (kernel - 1);
        Self {
            kernel,
            stride: 1,
            dilation,
            pad_left: total / 2,
            pad_right: total - total / 2,
        }
    }

    pub fn span(&self) -> usize {
        self.dilation * (self.kernel - 1) + 1
    }

    pub fn out_len(&self, len: usize) -> Result<usize> {
        let padded = len + self.pad_left + self.pad_right;
        if self.kernel == 0 || self.stride == 0 || self.dilation == 0 {
            return shape_err("conv kernel, stride and dilation must be positive");
        }
        if padded < self.span() {
            return shape_err(format!("sequence of length {len} shorter than kernel span {}", self.span()));
        }
        Ok((padded - self.span()) / self.stride + 1)
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    spec: ConvSpec,
    batch: usize,
    len_in: usize,
    len_out: usize,
    c_in: usize,
}

enum Op {
    Input,
    Param(ParamId),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    MulConst(Var, Tensor),
    ScaleRows(Var, Vec<f64>),
    AddTiled {
        x: Var,
        table: Var,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        cols: Tensor,
        geom: ConvGeom,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
        /// Rows that contributed to the batch statistics; `None` for eval
        /// mode, where the statistics are constants.
        stats_rows: Option<Vec<bool>>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        layout: SeqLayout,
        heads: usize,
        keys: Vec<Vec<usize>>,
        probs: Vec<Tensor>,
    },
    Reshape(Var),
    MaskedMse {
        pred: Var,
        diff: Tensor,
        weights: Tensor,
        total: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation so it can be differentiated once.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn check_finite(t: &Tensor, what: &str) -> Result<()> {
    if t.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite(format!("{what} produced a non-finite value")))
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// `x w + b`, with `b` a `1 x out` row broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ncols() != wv.nrows() {
            return shape_err(format!("linear: input {:?} vs weight {:?}", xv.dim(), wv.dim()));
        }
        let mut out = xv.dot(wv);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.dim() != (1, out.ncols()) {
                return shape_err(format!("linear: bias {:?} for {} outputs", bv.dim(), out.ncols()));
            }
            out += bv;
        }
        Ok(self.push(out, Op::Linear { x, w, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).dim() != self.value(b).dim() {
            return shape_err(format!("add: {:?} vs {:?}", self.value(a).dim(), self.value(b).dim()));
        }
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(gelu);
        self.push(out, Op::Gelu(a))
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        if self.value(a).dim() != c.dim() {
            return shape_err(format!("mul_const: {:?} vs {:?}", self.value(a).dim(), c.dim()));
        }
        let out = self.value(a) * &c;
        Ok(self.push(out, Op::MulConst(a, c)))
    }

    pub fn scale_rows(&mut self, a: Var, w: Vec<f64>) -> Result<Var> {
        if self.value(a).nrows() != w.len() {
            return shape_err(format!("scale_rows: {} rows vs {} weights", self.value(a).nrows(), w.len()));
        }
        let mut out = self.value(a).clone();
        for (mut row, &f) in out.rows_mut().into_iter().zip(&w) {
            row *= f;
        }
        Ok(self.push(out, Op::ScaleRows(a, w)))
    }

    /// Adds row `i % T` of a `T x d` table to row `i` of `x`.
    pub fn add_tiled(&mut self, x: Var, table: Var) -> Result<Var> {
        let (xv, tv) = (self.value(x), self.value(table));
        let t = tv.nrows();
        if t == 0 || xv.ncols() != tv.ncols() || xv.nrows() % t != 0 {
            return shape_err(format!("add_tiled: {:?} vs table {:?}", xv.dim(), tv.dim()));
        }
        let mut out = xv.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row += &tv.row(i % t);
        }
        Ok(self.push(out, Op::AddTiled { x, table }))
    }

    /// Cross-correlation of every sequence in `x` with weights laid out as
    /// `(kernel * c_in) x c_out`, entry `[j * c_in + c, o]` being tap `j` of
    /// input channel `c` for output channel `o`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, layout: SeqLayout, spec: ConvSpec) -> Result<Var> {
        let xv = self.value(x);
        if xv.nrows() != layout.rows() {
            return shape_err(format!("conv1d: {} rows for layout {:?}", xv.nrows(), layout));
        }
        let c_in = xv.ncols();
        let wv = self.value(w);
        if wv.nrows() != spec.kernel * c_in {
            return shape_err(format!("conv1d: weight {:?} for kernel {} x {c_in} channels", wv.dim(), spec.kernel));
        }
        let len_out = spec.out_len(layout.len)?;
        let mut cols = Array2::zeros((layout.batch * len_out, spec.kernel * c_in));
        for bi in 0..layout.batch {
            for to in 0..len_out {
                let r = bi * len_out + to;
                for j in 0..spec.kernel {
                    let pos = (to * spec.stride + j * spec.dilation) as isize - spec.pad_left as isize;
                    if pos < 0 || pos >= layout.len as isize {
                        continue;
                    }
                    let src = bi * layout.len + pos as usize;
                    cols.slice_mut(s![r, j * c_in..(j + 1) * c_in]).assign(&xv.row(src));
                }
            }
        }
        let mut out = cols.dot(wv);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.dim() != (1, out.ncols()) {
                return shape_err(format!("conv1d: bias {:?}", bv.dim()));
            }
            out += bv;
        }
        let geom = ConvGeom {
            spec,
            batch: layout.batch,
            len_in: layout.len,
            len_out,
            c_in,
        };
        Ok(self.push(out, Op::Conv1d { x, w, b, cols, geom }))
    }

    /// Batch normalization with statistics over the rows flagged in
    /// `stats_rows` (all rows when `None`), applied to every row. Returns the
    /// output, the batch mean and the unbiased batch variance.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats_rows: Option<&[bool]>,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let xv = self.value(x);
        let (n, f) = xv.dim();
        let rows: Vec<bool> = match stats_rows {
            Some(r) if r.len() != n => return shape_err(format!("batch_norm: {} row flags for {n} rows", r.len())),
            Some(r) => r.to_vec(),
            None => vec![true; n],
        };
        let m = rows.iter().filter(|&&r| r).count();
        if m < 2 {
            return Err(NnError::Input(format!("batch norm in training mode needs at least 2 rows, got {m}")));
        }
        let mut mean = vec![0.0; f];
        for (row, _) in xv.rows().into_iter().zip(&rows).filter(|(_, &r)| r) {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        let mut var = vec![0.0; f];
        for (row, _) in xv.rows().into_iter().zip(&rows).filter(|(_, &r)| r) {
            for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        var.iter_mut().for_each(|v| *v /= m as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let unbiased: Vec<f64> = var.iter().map(|v| v * m as f64 / (m - 1) as f64).collect();
        let var_node = self.normalize(x, gamma, beta, &mean, inv_std, Some(rows))?;
        Ok((var_node, mean, unbiased))
    }

    /// Batch normalization with fixed statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64) -> Result<Var> {
        let inv_std = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        self.normalize(x, gamma, beta, mean, inv_std, None)
    }

    fn normalize(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: Vec<f64>,
        stats_rows: Option<Vec<bool>>,
    ) -> Result<Var> {
        let xv = self.value(x);
        let f = xv.ncols();
        let (gv, bv) = (self.value(gamma), self.value(beta));
        if gv.dim() != (1, f) || bv.dim() != (1, f) || mean.len() != f || inv_std.len() != f {
            return shape_err(format!("batch_norm: {f} features vs gamma {:?} beta {:?}", gv.dim(), bv.dim()));
        }
        let mut xhat = xv.clone();
        for mut row in xhat.rows_mut() {
            for ((v, mu), is) in row.iter_mut().zip(mean).zip(&inv_std) {
                *v = (*v - mu) * is;
            }
        }
        let out = &xhat * gv + bv;
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                stats_rows,
            },
        ))
    }

    /// Scaled dot-product attention over `heads` column blocks of `q`, `k`,
    /// `v`. Each query attends only to the valid rows of its own sequence;
    /// padded keys get exactly zero weight.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, layout: SeqLayout, heads: usize, valid: &[bool]) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, d) = qv.dim();
        if kv.dim() != (n, d) || vv.dim() != (n, d) || n != layout.rows() || valid.len() != n {
            return shape_err(format!("attention: q {:?} k {:?} v {:?} layout {:?}", qv.dim(), kv.dim(), vv.dim(), layout));
        }
        if heads == 0 || d % heads != 0 {
            return shape_err(format!("attention: width {d} not divisible by {heads} heads"));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let t = layout.len;
        let mut out = Array2::zeros((n, d));
        let mut keys = Vec::with_capacity(layout.batch);
        let mut probs = Vec::with_capacity(layout.batch * heads);
        for b in 0..layout.batch {
            let idx: Vec<usize> = (0..t).filter(|&i| valid[b * t + i]).collect();
            if idx.is_empty() {
                return Err(NnError::Input(format!("attention: sequence {b} is entirely padding")));
            }
            let rows = b * t..(b + 1) * t;
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = qv.slice(s![rows.clone(), cols.clone()]);
                let kh = kv.slice(s![rows.clone(), cols.clone()]).select(Axis(0), &idx);
                let vh = vv.slice(s![rows.clone(), cols.clone()]).select(Axis(0), &idx);
                let mut p = qh.dot(&kh.t()) * scale;
                for mut row in p.rows_mut() {
                    let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|x| (x - mx).exp());
                    let z = row.sum();
                    row /= z;
                }
                out.slice_mut(s![rows.clone(), cols]).assign(&p.dot(&vh));
                probs.push(p);
            }
            keys.push(idx);
        }
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                layout,
                heads,
                keys,
                probs,
            },
        ))
    }

    /// Attention weights recorded by an attention node, one `T x valid`
    /// matrix per (sequence, head).
    pub fn attention_weights(&self, v: Var) -> Option<&[Tensor]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let av = self.value(a);
        if av.len() != rows * cols {
            return shape_err(format!("reshape {:?} to {rows}x{cols}", av.dim()));
        }
        let flat: Vec<f64> = av.iter().copied().collect();
        let out = Array2::from_shape_vec((rows, cols), flat).expect("length checked");
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// `sum(w * (pred - target)^2) / sum(w)` as a `1 x 1` node; zero when
    /// every weight is zero.
    pub fn masked_mse(&mut self, pred: Var, target: &Tensor, weights: Tensor) -> Result<Var> {
        let pv = self.value(pred);
        if pv.dim() != target.dim() || pv.dim() != weights.dim() {
            return shape_err(format!("masked_mse: pred {:?} target {:?} weights {:?}", pv.dim(), target.dim(), weights.dim()));
        }
        let diff = pv - target;
        let total = weights.sum();
        let loss = if total == 0.0 {
            0.0
        } else {
            Zip::from(&diff).and(&weights).fold(0.0, |acc, d, w| acc + w * d * d) / total
        };
        Ok(self.push(
            Array2::from_elem((1, 1), loss),
            Op::MaskedMse {
                pred,
                diff,
                weights,
                total,
            },
        ))
    }

    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let w = Array2::ones(target.raw_dim());
        self.masked_mse(pred, target, w)
    }

    fn acc(&mut self, v: Var, g: Tensor) {
        match &mut self.grads[v.0] {
            Some(existing) => *existing += &g,
            slot => *slot = Some(g),
        }
    }

    /// Back-propagates from a `1 x 1` node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).dim() != (1, 1) {
            return shape_err(format!("backward from non-scalar {:?}", self.value(loss).dim()));
        }
        check_finite(self.value(loss), "loss")?;
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(Array2::ones((1, 1)));
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &Tensor) {
        // Parent contributions are computed against immutable node values,
        // then accumulated.
        let mut out: Vec<(Var, Tensor)> = Vec::new();
        let val = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[i].op {
            Op::Input | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                out.push((*x, g.dot(&val(*w).t())));
                out.push((*w, val(*x).t().dot(g)));
                if let Some(b) = b {
                    out.push((*b, g.sum_axis(Axis(0)).insert_axis(Axis(0))));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, g.clone()));
                out.push((*b, g.clone()));
            }
            Op::Scale(a, c) => out.push((*a, g * *c)),
            Op::Gelu(a) => {
                let mut d = val(*a).mapv(gelu_grad);
                d *= g;
                out.push((*a, d));
            }
            Op::MulConst(a, c) => out.push((*a, g * c)),
            Op::ScaleRows(a, w) => {
                let mut d = g.clone();
                for (mut row, &f) in d.rows_mut().into_iter().zip(w) {
                    row *= f;
                }
                out.push((*a, d));
            }
            Op::AddTiled { x, table } => {
                let t = val(*table).nrows();
                let mut dt = Array2::zeros(val(*table).raw_dim());
                for (r, row) in g.rows().into_iter().enumerate() {
                    let mut dst = dt.row_mut(r % t);
                    dst += &row;
                }
                out.push((*x, g.clone()));
                out.push((*table, dt));
            }
            Op::Conv1d { x, w, b, cols, geom } => {
                out.push((*w, cols.t().dot(g)));
                if let Some(b) = b {
                    out.push((*b, g.sum_axis(Axis(0)).insert_axis(Axis(0))));
                }
                let dcols = g.dot(&val(*w).t());
                let mut dx = Array2::zeros((geom.batch * geom.len_in, geom.c_in));
                let spec = geom.spec;
                for bi in 0..geom.batch {
                    for to in 0..geom.len_out {
                        let r = bi * geom.len_out + to;
                        for j in 0..spec.kernel {
                            let pos = (to * spec.stride + j * spec.dilation) as isize - spec.pad_left as isize;
                            if pos < 0 || pos >= geom.len_in as isize {
                                continue;
                            }
                            let mut dst = dx.row_mut(bi * geom.len_in + pos as usize);
                            dst += &dcols.slice(s![r, j * geom.c_in..(j + 1) * geom.c_in]);
                        }
                    }
                }
                out.push((*x, dx));
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                stats_rows,
            } => {
                out.push((*gamma, (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0))));
                out.push((*beta, g.sum_axis(Axis(0)).insert_axis(Axis(0))));
                let gh = g * val(*gamma);
                let mut dx = gh.clone();
                match stats_rows {
                    None => {
                        for mut row in dx.rows_mut() {
                            for (v, is) in row.iter_mut().zip(inv_std) {
                                *v *= is;
                            }
                        }
                    }
                    Some(rows) => {
                        let m = rows.iter().filter(|&&r| r).count() as f64;
                        let s1 = gh.sum_axis(Axis(0));
                        let s2 = (&gh * xhat).sum_axis(Axis(0));
                        for ((mut row, xh), &in_stats) in dx.rows_mut().into_iter().zip(xhat.rows()).zip(rows) {
                            for (f, v) in row.iter_mut().enumerate() {
                                let corr = if in_stats { (s1[f] + xh[f] * s2[f]) / m } else { 0.0 };
                                *v = inv_std[f] * (*v - corr);
                            }
                        }
                    }
                }
                out.push((*x, dx));
            }
            Op::Attention {
                q,
                k,
                v,
                layout,
                heads,
                keys,
                probs,
            } => {
                let (qv, kv, vv) = (val(*q), val(*k), val(*v));
                let d = qv.ncols();
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let t = layout.len;
                let mut dq = Array2::zeros(qv.raw_dim());
                let mut dk = Array2::zeros(kv.raw_dim());
                let mut dv = Array2::zeros(vv.raw_dim());
                for (b, idx) in keys.iter().enumerate() {
                    let rows = b * t..(b + 1) * t;
                    for h in 0..*heads {
                        let cols = h * dh..(h + 1) * dh;
                        let p = &probs[b * heads + h];
                        let qh = qv.slice(s![rows.clone(), cols.clone()]);
                        let kh = kv.slice(s![rows.clone(), cols.clone()]).select(Axis(0), idx);
                        let vh = vv.slice(s![rows.clone(), cols.clone()]).select(Axis(0), idx);
                        let go = g.slice(s![rows.clone(), cols.clone()]);
                        let dvh = p.t().dot(&go);
                        let dp = go.dot(&vh.t());
                        let mut ds = &dp * p;
                        let rs = ds.sum_axis(Axis(1));
                        for ((mut row, pr), r) in ds.rows_mut().into_iter().zip(p.rows()).zip(rs.iter()) {
                            row.zip_mut_with(&pr, |v, &pv| *v -= pv * r);
                        }
                        ds *= scale;
                        dq.slice_mut(s![rows.clone(), cols.clone()]).assign(&ds.dot(&kh));
                        let dkh = ds.t().dot(&qh);
                        for (a, &key) in idx.iter().enumerate() {
                            let r = b * t + key;
                            dk.slice_mut(s![r, cols.clone()]).assign(&dkh.row(a));
                            dv.slice_mut(s![r, cols.clone()]).assign(&dvh.row(a));
                        }
                    }
                }
                out.push((*q, dq));
                out.push((*k, dk));
                out.push((*v, dv));
            }
            Op::Reshape(a) => {
                let shape = val(*a).raw_dim();
                let flat: Vec<f64> = g.iter().copied().collect();
                out.push((*a, Array2::from_shape_vec(shape, flat).expect("same length")));
            }
            Op::MaskedMse {
                pred,
                diff,
                weights,
                total,
            } => {
                let d = if *total == 0.0 {
                    Array2::zeros(diff.raw_dim())
                } else {
                    diff * weights * (2.0 * g[[0, 0]] / total)
                };
                out.push((*pred, d));
            }
        }
        for (v, d) in out {
            self.acc(v, d);
        }
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Adds the gradient of every parameter node into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) -> Result<()> {
        for (node, g) in self.nodes.iter().zip(&self.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                check_finite(g, &format!("gradient of {}", store.get(*id).name))?;
                store.accumulate(*id, g);
            }
        }
        Ok(())
    }
}
