//! Pipeline driver: configuration, synthetic cohort generation and the
//! file-based stages behind the `sleepcast` binary.

pub mod config;
pub mod pipeline;
pub mod synth;

pub use config::{PipelineConfig, PredictOn, SplitSpec};
