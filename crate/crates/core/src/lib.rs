//! Core data handling for wearable-sensor sleep prediction: record ingestion,
//! ground-truth label synthesis, feature extraction and macro-F1 scoring.
//!
//! The model crates (`sleepcast-nn`, `sleepcast-ensemble`) consume the
//! [`featurize::DaySequence`] and [`featurize::DailyStats`] views built here.

pub mod container;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod featurize;
pub mod labeling;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;

pub use data::{
    parse_sensor_file, parse_sleep_file, parse_survey_file, segment_by_day, Question, SensorKind,
    SensorStream, SleepSession, SurveyResponse, Timestamp, UserDay,
};
pub use error::{CoreError, Result};
pub use evaluate::{competition_score, evaluate_run, f1_macro, ConfusionCounts, ScoreReport};
pub use featurize::{build_daily_stats, build_day_sequence, DailyStats, DaySequence, DayStreams, FeatureConfig};
pub use labeling::{compute_user_means, label_all, q_label, s_labels, LabelVector, UserMeans, LABEL_NAMES};
