use ndarray::Array2;

use super::graph::{Graph, Var};
use super::Tensor;
use crate::error::Result;

/// Largest relative disagreement between an analytic gradient and central
/// differences with step `h`.
///
/// `f` returns the value and the analytic gradient at a point. Coordinate
/// `i` is compared as `|a_i - n_i| / max(|n_i|, 1e-3 * max_j |n_j|, 1e-10)`,
/// so coordinates whose true gradient is tiny relative to the largest one
/// are judged on the scale of the largest rather than amplifying
/// finite-difference noise. A gradient scaled by 2 scores about 1.
pub fn grad_check<F>(mut f: F, theta: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(theta);
    assert_eq!(analytic.len(), theta.len(), "gradient length");
    let mut point = theta.to_vec();
    let numeric: Vec<f64> = (0..theta.len())
        .map(|i| {
            point[i] = theta[i] + h;
            let up = f(&point).0;
            point[i] = theta[i] - h;
            let down = f(&point).0;
            point[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect();
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1e-3 * scale).max(1e-10))
        .fold(0.0, f64::max)
}

/// Gradient check of a graph built from `inputs`. The output is reduced
/// to a scalar by a mean-squared error against a fixed non-trivial target
/// unless it is already `1 x 1`. Returns the [`grad_check`] error over all
/// input entries.
pub fn graph_grad_check<F>(inputs: &[Tensor], build: F, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let shapes: Vec<(usize, usize)> = inputs.iter().map(|t| t.dim()).collect();
    let unflatten = |flat: &[f64]| -> Vec<Tensor> {
        let mut off = 0;
        shapes
            .iter()
            .map(|&(r, c)| {
                let t = Array2::from_shape_vec((r, c), flat[off..off + r * c].to_vec()).expect("sizes match");
                off += r * c;
                t
            })
            .collect()
    };
    let eval = |flat: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = unflatten(flat).into_iter().map(|t| g.input(t)).collect();
        let out = build(&mut g, &vars)?;
        let loss = if g.value(out).dim() == (1, 1) {
            out
        } else {
            let target = Array2::from_shape_fn(g.value(out).raw_dim(), |(i, j)| (1.3 * i as f64 + 0.7 * j as f64).sin());
            g.mse(out, &target)?
        };
        g.backward(loss)?;
        let grad = vars
            .iter()
            .flat_map(|&v| match g.grad(v) {
                Some(t) => t.iter().copied().collect::<Vec<_>>(),
                None => vec![0.0; g.value(v).len()],
            })
            .collect();
        Ok((g.scalar(loss), grad))
    };
    let theta: Vec<f64> = inputs.iter().flat_map(|t| t.iter().copied()).collect();
    eval(&theta)?;
    Ok(grad_check(|x| eval(x).expect("graph evaluated at the base point"), &theta, h))
}
