//! Transformer encoder for multivariate day sequences: masked-value
//! pre-training and per-question regression fine-tuning.

pub mod config;
pub mod mask;
pub mod model;
pub mod train;

pub use config::TstConfig;
pub use mask::{sample_geometric_mask, MaskSpec};
pub use model::{Batch, Head, Standardizer, TstModel, MODEL_KIND, MODEL_VERSION};
pub use train::{finetune, finetune_epochs, loss_curve_csv, predict_q, pretrain, pretrain_epochs, threshold};
