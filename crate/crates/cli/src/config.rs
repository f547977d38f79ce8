use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sleepcast_core::data::UserDay;
use sleepcast_ensemble::EnsembleParams;
use sleepcast_nn::tst::TstConfig;

use crate::synth::SynthSpec;

/// File locations, relative to the working directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub sensor_dir: PathBuf,
    pub sleep: PathBuf,
    pub survey: PathBuf,
    pub truth_labels: PathBuf,
    pub labels: PathBuf,
    pub user_means: PathBuf,
    pub features_dir: PathBuf,
    pub models_dir: PathBuf,
    pub predictions: PathBuf,
    pub score: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            sensor_dir: "sensors".into(),
            sleep: "sleep.csv".into(),
            survey: "survey.csv".into(),
            truth_labels: "truth_labels.csv".into(),
            labels: "labels.csv".into(),
            user_means: "user_means.json".into(),
            features_dir: "features".into(),
            models_dir: "models".into(),
            predictions: "predictions.csv".into(),
            score: "score.json".into(),
        }
    }
}

/// Which user-days train the models and which are held out. Explicit lists
/// win; otherwise the last `validation_fraction` of each user's days
/// (chronologically) are held out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train: Option<Vec<UserDay>>,
    pub validation: Option<Vec<UserDay>>,
    pub validation_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: None,
            validation: None,
            validation_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: BTreeSet<UserDay>,
    pub validation: BTreeSet<UserDay>,
}

impl SplitSpec {
    pub fn resolve(&self, days: &BTreeSet<UserDay>) -> Result<Split> {
        match (&self.train, &self.validation) {
            (Some(t), Some(v)) => {
                let train: BTreeSet<UserDay> = t.iter().cloned().collect();
                let validation: BTreeSet<UserDay> = v.iter().cloned().collect();
                if let Some(d) = train.intersection(&validation).next() {
                    bail!("{d} is listed in both the train and validation splits");
                }
                Ok(Split { train, validation })
            }
            (Some(t), None) => {
                let train: BTreeSet<UserDay> = t.iter().cloned().collect();
                let validation = days.difference(&train).cloned().collect();
                Ok(Split { train, validation })
            }
            (None, Some(v)) => {
                let validation: BTreeSet<UserDay> = v.iter().cloned().collect();
                let train = days.difference(&validation).cloned().collect();
                Ok(Split { train, validation })
            }
            (None, None) => {
                if !(0.0..1.0).contains(&self.validation_fraction) {
                    bail!("validation_fraction {} outside [0, 1)", self.validation_fraction);
                }
                let mut split = Split {
                    train: BTreeSet::new(),
                    validation: BTreeSet::new(),
                };
                let mut users: Vec<&str> = days.iter().map(|d| d.user_id.as_str()).collect();
                users.dedup();
                for user in users {
                    // BTreeSet order is (user, date), so this is chronological.
                    let mine: Vec<&UserDay> = days.iter().filter(|d| d.user_id == user).collect();
                    let held = (mine.len() as f64 * self.validation_fraction).floor() as usize;
                    let cut = mine.len() - held;
                    split.train.extend(mine[..cut].iter().map(|d| (*d).clone()));
                    split.validation.extend(mine[cut..].iter().map(|d| (*d).clone()));
                }
                Ok(split)
            }
        }
    }
}

/// Which user-days `predict` covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictOn {
    Validation,
    Train,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub workdir: PathBuf,
    pub paths: Paths,
    /// Seconds east of UTC used to cut local days.
    pub tz_offset: i64,
    pub n_activity_categories: usize,
    /// Seeds every stage; overrides the seeds inside `tst`, `ensemble` and
    /// `synth`.
    pub seed: u64,
    pub tst: TstConfig,
    pub ensemble: EnsembleParams,
    pub split: SplitSpec,
    pub predict_on: PredictOn,
    pub synth: SynthSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            workdir: ".".into(),
            paths: Paths::default(),
            tz_offset: 0,
            n_activity_categories: sleepcast_core::featurize::DEFAULT_ACTIVITY_CATEGORIES,
            seed: 42,
            tst: TstConfig::default(),
            ensemble: EnsembleParams::default(),
            split: SplitSpec::default(),
            predict_on: PredictOn::Validation,
            synth: SynthSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Pushes the top-level seed into every component and checks the
    /// component configs.
    pub fn finalize(mut self) -> Result<Self> {
        self.tst.seed = self.seed;
        self.ensemble.seed = self.seed;
        self.synth.seed = self.seed;
        self.tst.feat_dim = sleepcast_core::featurize::CONTINUOUS_FEATURES + self.n_activity_categories;
        self.tst.validate()?;
        self.ensemble.validate()?;
        self.synth.validate()?;
        Ok(self)
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }

    pub fn sensor_file(&self, stem: &str) -> PathBuf {
        self.path(&self.paths.sensor_dir).join(format!("{stem}.csv"))
    }

    pub fn sequences_file(&self) -> PathBuf {
        self.path(&self.paths.features_dir).join("sequences.csv")
    }

    pub fn daily_file(&self) -> PathBuf {
        self.path(&self.paths.features_dir).join("daily.csv")
    }

    pub fn model_file(&self, name: &str) -> PathBuf {
        self.path(&self.paths.models_dir).join(name)
    }

    pub fn feature_config(&self) -> sleepcast_core::FeatureConfig {
        sleepcast_core::FeatureConfig {
            tz_offset: self.tz_offset,
            n_categories: self.n_activity_categories,
        }
    }
}
