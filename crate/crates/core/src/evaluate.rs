//! Macro-F1 scoring of binary label predictions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::UserDay;
use crate::error::{CoreError, Result};
use crate::labeling::{LabelVector, LABEL_NAMES};

/// One-vs-rest confusion counts for a single class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn for_class(truth: &[u8], pred: &[u8], class: u8) -> Self {
        let mut c = ConfusionCounts::default();
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == class, p == class) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// F1 of this class. A class absent from both truth and prediction scores
    /// 1; an undefined precision or recall otherwise scores 0.
    pub fn f1(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            return 1.0;
        }
        if self.tp + self.fp == 0 || self.tp + self.fn_ == 0 {
            return 0.0;
        }
        let precision = self.tp as f64 / (self.tp + self.fp) as f64;
        let recall = self.tp as f64 / (self.tp + self.fn_) as f64;
        if precision + recall == 0.0 {
            return 0.0;
        }
        2.0 * precision * recall / (precision + recall)
    }
}

/// Unweighted mean of the class-0 and class-1 F1 scores.
pub fn f1_macro(truth: &[u8], pred: &[u8]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(CoreError::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(CoreError::Invalid("cannot score an empty label list".into()));
    }
    let f0 = ConfusionCounts::for_class(truth, pred, 0).f1();
    let f1 = ConfusionCounts::for_class(truth, pred, 1).f1();
    Ok((f0 + f1) / 2.0)
}

/// Ten times the mean per-label macro F1, on a 0-10 scale.
pub fn competition_score(per_label_f1: &[f64]) -> Result<f64> {
    if per_label_f1.len() != LABEL_NAMES.len() {
        return Err(CoreError::WrongArity {
            expected: LABEL_NAMES.len(),
            found: per_label_f1.len(),
        });
    }
    if let Some(bad) = per_label_f1.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(CoreError::Invalid(format!("F1 {bad} outside [0, 1]")));
    }
    Ok(10.0 * per_label_f1.iter().sum::<f64>() / per_label_f1.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub f1_macro: f64,
    /// Counts with class 1 as the positive class.
    pub confusion: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_label: BTreeMap<String, f64>,
    pub aggregate: f64,
    pub n: usize,
    pub confusion: BTreeMap<String, ConfusionCounts>,
}

impl ScoreReport {
    pub fn label_f1(&self) -> [f64; 7] {
        LABEL_NAMES.map(|l| self.per_label[l])
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6} {:>8} {:>6} {:>6} {:>6} {:>6}", "label", "macroF1", "tp", "fp", "fn", "tn")?;
        for name in LABEL_NAMES {
            let c = self.confusion[name];
            writeln!(
                f,
                "{name:<6} {:>8.4} {:>6} {:>6} {:>6} {:>6}",
                self.per_label[name], c.tp, c.fp, c.fn_, c.tn
            )?;
        }
        write!(f, "aggregate {:.2} / 10 over {} user-days", self.aggregate, self.n)
    }
}

/// Scores predictions against truth. Both sides must cover exactly the same
/// user-days.
pub fn evaluate_run(truth: &[LabelVector], pred: &[LabelVector]) -> Result<ScoreReport> {
    let index = |rows: &[LabelVector], side: &str| -> Result<BTreeMap<UserDay, [u8; 7]>> {
        let mut m = BTreeMap::new();
        for r in rows {
            if m.insert(r.user_day.clone(), r.values).is_some() {
                return Err(CoreError::Invalid(format!("duplicate {side} row for {}", r.user_day)));
            }
        }
        Ok(m)
    };
    let t = index(truth, "truth")?;
    let p = index(pred, "prediction")?;
    let missing_pred: Vec<String> = t.keys().filter(|k| !p.contains_key(*k)).map(|k| k.to_string()).collect();
    let extra_pred: Vec<String> = p.keys().filter(|k| !t.contains_key(*k)).map(|k| k.to_string()).collect();
    if !missing_pred.is_empty() || !extra_pred.is_empty() {
        let mut msg = Vec::new();
        if !missing_pred.is_empty() {
            msg.push(format!("no prediction for [{}]", missing_pred.join(", ")));
        }
        if !extra_pred.is_empty() {
            msg.push(format!("no truth for [{}]", extra_pred.join(", ")));
        }
        return Err(CoreError::Unmatched(msg.join("; ")));
    }
    let mut per_label = BTreeMap::new();
    let mut confusion = BTreeMap::new();
    let mut f1s = Vec::with_capacity(LABEL_NAMES.len());
    for (k, name) in LABEL_NAMES.iter().enumerate() {
        let tv: Vec<u8> = t.values().map(|v| v[k]).collect();
        let pv: Vec<u8> = p.values().map(|v| v[k]).collect();
        let f = f1_macro(&tv, &pv)?;
        per_label.insert(name.to_string(), f);
        confusion.insert(name.to_string(), ConfusionCounts::for_class(&tv, &pv, 1));
        f1s.push(f);
    }
    Ok(ScoreReport {
        per_label,
        aggregate: competition_score(&f1s)?,
        n: t.len(),
        confusion,
    })
}
