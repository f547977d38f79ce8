use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::Tensor;
use crate::error::{NnError, Result};

/// Rectified Adam (Liu et al., 2020).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RAdam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl RAdam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// The variance rectification factor for step `t`, or `None` while the
    /// approximated SMA length is at most 4.
    pub fn rectification(&self, t: u64) -> Option<f64> {
        let b2t = self.beta2.powi(t as i32);
        let rho_inf = 2.0 / (1.0 - self.beta2) - 1.0;
        let rho_t = rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t);
        if rho_t > 4.0 {
            Some(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt())
        } else {
            None
        }
    }

    /// Applies one update from the gradients held in `store`. Nothing is
    /// modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for p in store.iter() {
            if p.grad.raw_dim() != p.value.raw_dim() {
                return Err(NnError::Shape(format!("gradient of {} not populated", p.name)));
            }
            if !p.grad.iter().all(|g| g.is_finite()) {
                return Err(NnError::NonFinite(format!("gradient of {}", p.name)));
            }
        }
        if self.m.len() != store.len() || self.m.iter().zip(store.iter()).any(|(m, p)| m.raw_dim() != p.value.raw_dim()) {
            if self.t != 0 {
                return Err(NnError::Shape("parameter set changed under the optimizer".into()));
            }
            self.m = store.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let rect = self.rectification(self.t);
        let (lr, eps) = (self.lr, self.eps);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut p.value).and(m).and(v).and(&p.grad).for_each(|w, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                match rect {
                    Some(r) => *w -= lr * m_hat * r * bc2.sqrt() / (v.sqrt() + eps),
                    None => *w -= lr * m_hat,
                }
            });
        }
        Ok(())
    }
}
