use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

/// Architecture and training settings. Every field may be overridden from a
/// JSON document using these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TstConfig {
    pub feat_dim: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    pub mask_ratio: f64,
    pub mean_mask_len: f64,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Width of the input-projection convolution.
    pub conv_kernel: usize,
}

impl Default for TstConfig {
    fn default() -> Self {
        Self {
            feat_dim: 33,
            max_len: 144,
            d_model: 128,
            n_layers: 3,
            n_heads: 8,
            ff_dim: 256,
            dropout: 0.1,
            mask_ratio: 0.15,
            mean_mask_len: 3.0,
            pretrain_epochs: 2000,
            pretrain_lr: 0.001,
            finetune_epochs: 400,
            finetune_lr: 0.1,
            batch_size: 128,
            seed: 42,
            conv_kernel: 3,
        }
    }
}

impl TstConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(NnError::Config(msg));
        if self.feat_dim == 0 || self.max_len == 0 || self.d_model == 0 || self.ff_dim == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return bad(format!("mask_ratio {} outside (0, 1)", self.mask_ratio));
        }
        if !(self.mean_mask_len >= 1.0) {
            return bad(format!("mean_mask_len {} below 1", self.mean_mask_len));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.batch_size == 0 || self.conv_kernel == 0 {
            return bad("batch_size and conv_kernel must be positive".into());
        }
        if !(self.pretrain_lr > 0.0 && self.finetune_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        Ok(())
    }
}
