//! Dense 2-D tensor math with reverse-mode differentiation.
//!
//! Tensors are `ndarray` matrices of `f64`. Sequence batches are stacked
//! row-wise; see [`graph::SeqLayout`].

pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod radam;

pub type Tensor = ndarray::Array2<f64>;

pub use gradcheck::{grad_check, graph_grad_check};
pub use graph::{ConvSpec, Graph, SeqLayout, Var};
pub use layers::{conv1d, kernels_to_matrix, multi_head_attention, BatchNorm, BatchStats, Dense, Mode, MultiHeadAttention, Padding};
pub use params::{ParamId, ParamStore, Parameter};
pub use radam::RAdam;
