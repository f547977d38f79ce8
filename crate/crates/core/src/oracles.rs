//! Naive reference implementations for tests.
//!
//! Nothing here calls into the main-path modules except for shared record
//! types; every computation is written out from its definition, favouring
//! obviousness over speed.

use crate::data::{SensorKind, SensorStream, UserDay};
use crate::error::{CoreError, Result};
use crate::featurize::{DayStreams, DaySequence, FeatureConfig};

/// Main-path versus oracle outputs for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub case_id: String,
    pub main: Vec<f64>,
    pub oracle: Vec<f64>,
    pub max_abs_dev: f64,
    pub max_rel_dev: f64,
}

impl OracleReport {
    pub fn compare(case_id: impl Into<String>, main: Vec<f64>, oracle: Vec<f64>) -> Self {
        assert_eq!(main.len(), oracle.len(), "oracle length mismatch");
        let mut max_abs_dev: f64 = 0.0;
        let mut max_rel_dev: f64 = 0.0;
        for (a, b) in main.iter().zip(&oracle) {
            let d = (a - b).abs();
            max_abs_dev = max_abs_dev.max(d);
            if d > 0.0 {
                max_rel_dev = max_rel_dev.max(d / a.abs().max(b.abs()));
            }
        }
        Self {
            case_id: case_id.into(),
            main,
            oracle,
            max_abs_dev,
            max_rel_dev,
        }
    }

    pub fn exact(&self) -> bool {
        self.main.len() == self.oracle.len()
            && self.main.iter().zip(&self.oracle).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

const DAY: usize = 86_400;

/// Second-by-second values of every channel over the day, `None` where the
/// stream has no value in force.
fn materialize(stream: &SensorStream, start: i64) -> Vec<Vec<Option<f64>>> {
    let arity = stream.kind.arity();
    let mut out = vec![vec![None; DAY]; arity];
    let ts: Vec<i64> = stream.samples().map(|(t, _)| t).collect();
    if ts.is_empty() {
        return out;
    }
    // The last sample stays in force for the lower median gap between samples.
    let last_end = if ts.len() < 2 {
        i64::MAX
    } else {
        let mut gaps = Vec::new();
        for i in 1..ts.len() {
            gaps.push(ts[i] - ts[i - 1]);
        }
        gaps.sort();
        ts[ts.len() - 1] + gaps[(gaps.len() - 1) / 2]
    };
    for i in 0..ts.len() {
        let from = ts[i];
        let to = if i + 1 < ts.len() { ts[i + 1] } else { last_end };
        let vals = stream.sample(i);
        let mut t = from.max(start);
        while t < to && t < start + DAY as i64 {
            let sec = (t - start) as usize;
            for c in 0..arity {
                out[c][sec] = Some(vals[c]);
            }
            t += 1;
        }
    }
    out
}

/// Population mean/std/min/max of a window's present values.
fn stats(window: &[Option<f64>]) -> Option<[f64; 4]> {
    let present: Vec<f64> = window.iter().flatten().copied().collect();
    if present.is_empty() {
        return None;
    }
    let mut lo = present[0];
    let mut hi = present[0];
    for &v in &present {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    if lo == hi {
        return Some([lo, 0.0, lo, hi]);
    }
    let mut total = 0.0;
    for &v in &present {
        total += v;
    }
    let mut mean = total / present.len() as f64;
    if mean < lo {
        mean = lo;
    }
    if mean > hi {
        mean = hi;
    }
    let mut sq = 0.0;
    for &v in &present {
        sq += (v - mean) * (v - mean);
    }
    Some([mean, (sq / present.len() as f64).sqrt(), lo, hi])
}

/// Reference day-sequence builder working on full 86 400-second arrays.
pub fn oracle_featurize(day: &UserDay, streams: &DayStreams, cfg: &FeatureConfig) -> Result<DaySequence> {
    if streams.values().all(|s| s.is_empty()) {
        return Err(CoreError::EmptyDay(day.to_string()));
    }
    let start = day.start_epoch(cfg.tz_offset);
    let n_windows = DAY / 600;
    let width = 24 + cfg.n_categories;
    let mut rows = vec![vec![0.0; width]; n_windows];
    let mut valid = vec![false; n_windows];

    let mut col = 0;
    for kind in [SensorKind::Accel, SensorKind::Gps, SensorKind::HeartRate] {
        let arity = kind.arity();
        if let Some(s) = streams.get(&kind) {
            let secs = materialize(s, start);
            for (c, channel) in secs.iter().enumerate() {
                for w in 0..n_windows {
                    if let Some(st) = stats(&channel[w * 600..(w + 1) * 600]) {
                        valid[w] = true;
                        for k in 0..4 {
                            rows[w][col + 4 * c + k] = st[k];
                        }
                    }
                }
            }
        }
        col += 4 * arity;
    }
    if let Some(s) = streams.get(&SensorKind::Activity) {
        let secs = materialize(s, start);
        for w in 0..n_windows {
            for v in secs[0][w * 600..(w + 1) * 600].iter().flatten() {
                valid[w] = true;
                let code = *v as usize;
                if code >= cfg.n_categories || *v != code as f64 {
                    return Err(CoreError::InvalidRecord(format!("activity code {v}")));
                }
                rows[w][24 + code] = 1.0;
            }
        }
    }
    Ok(DaySequence {
        user_day: day.clone(),
        n_features: width,
        values: rows.concat(),
        pad_mask: valid,
    })
}

/// Exhaustive k-nearest-neighbour class-1 fraction. Neighbours are ranked by
/// squared Euclidean distance, then by training row index.
pub fn oracle_knn(train_x: &[Vec<f64>], train_y: &[u8], query: &[f64], k: usize) -> f64 {
    let mut all: Vec<(f64, usize)> = Vec::new();
    for (i, row) in train_x.iter().enumerate() {
        let mut d = 0.0;
        for j in 0..row.len() {
            d += (row[j] - query[j]) * (row[j] - query[j]);
        }
        all.push((d, i));
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let k = k.min(all.len());
    let ones = all[..k].iter().filter(|(_, i)| train_y[*i] == 1).count();
    ones as f64 / k as f64
}

/// Macro F1 straight from per-class precision and recall.
pub fn oracle_f1(truth: &[u8], pred: &[u8]) -> f64 {
    let mut total = 0.0;
    for class in [0u8, 1u8] {
        let in_truth = truth.iter().filter(|&&t| t == class).count();
        let in_pred = pred.iter().filter(|&&p| p == class).count();
        let hits = truth.iter().zip(pred).filter(|(&t, &p)| t == class && p == class).count();
        let f = if in_truth == 0 && in_pred == 0 {
            1.0
        } else if in_truth == 0 || in_pred == 0 {
            0.0
        } else {
            let precision = hits as f64 / in_pred as f64;
            let recall = hits as f64 / in_truth as f64;
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        };
        total += f;
    }
    total / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskStats {
    pub masked_fraction: f64,
    pub mean_masked_run: f64,
    pub masked_runs: usize,
}

/// Fraction of masked cells and mean length of maximal masked runs, counted
/// separately within each column.
pub fn oracle_mask_stats(columns: &[Vec<bool>]) -> MaskStats {
    let mut cells = 0usize;
    let mut masked = 0usize;
    let mut runs = 0usize;
    for col in columns {
        let mut prev = false;
        for &m in col {
            cells += 1;
            if m {
                masked += 1;
                if !prev {
                    runs += 1;
                }
            }
            prev = m;
        }
    }
    MaskStats {
        masked_fraction: masked as f64 / cells.max(1) as f64,
        mean_masked_run: if runs == 0 { 0.0 } else { masked as f64 / runs as f64 },
        masked_runs: runs,
    }
}
