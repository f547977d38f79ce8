//! Feature extraction from per-day sensor streams.
//!
//! Two views of a day are produced:
//!
//! * [`DaySequence`]: every stream is forward-filled onto a one-second grid,
//!   then summarised per ten-minute window (mean, std, min, max for continuous
//!   channels and a presence one-hot for activity codes), giving a 144-row
//!   matrix plus a padding mask.
//! * [`DailyStats`]: streams are forward-filled onto a one-minute grid and
//!   reduced to ten whole-day statistics.
//!
//! Grid points before a stream's first sample of the day, or past the hold of
//! its last sample, are missing. Missing values never enter a statistic; a
//! statistic with no data is zero.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{SensorKind, SensorStream, UserDay, SECONDS_PER_DAY};
use crate::error::{CoreError, Result};

pub const WINDOW_SECONDS: usize = 600;
pub const WINDOWS_PER_DAY: usize = SECONDS_PER_DAY as usize / WINDOW_SECONDS;
pub const DEFAULT_ACTIVITY_CATEGORIES: usize = 9;
/// Continuous channels contribute four statistics each: 3 accel + 2 gps + 1 hr.
pub const CONTINUOUS_FEATURES: usize = 24;
pub const DEFAULT_SEQUENCE_FEATURES: usize = CONTINUOUS_FEATURES + DEFAULT_ACTIVITY_CATEGORIES;
pub const DAILY_FEATURES: usize = 10;
pub const MINUTES_PER_DAY: usize = SECONDS_PER_DAY as usize / 60;

/// Streams for one user-day, keyed by sensor.
pub type DayStreams = BTreeMap<SensorKind, SensorStream>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub tz_offset: i64,
    pub n_categories: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            tz_offset: 0,
            n_categories: DEFAULT_ACTIVITY_CATEGORIES,
        }
    }
}

impl FeatureConfig {
    pub fn n_sequence_features(&self) -> usize {
        CONTINUOUS_FEATURES + self.n_categories
    }
}

/// A stream resampled onto a regular grid. Missing grid points have
/// `present[i] == false` and zero channel values.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSeries {
    pub present: Vec<bool>,
    pub channels: Vec<Vec<f64>>,
}

impl DenseSeries {
    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }
}

/// How long the last sample of a stream stays in force: the lower median of
/// its inter-sample gaps. `None` (hold to the end of the span) for streams with
/// fewer than two samples.
pub fn trailing_hold(timestamps: &[i64]) -> Option<i64> {
    if timestamps.len() < 2 {
        return None;
    }
    let mut gaps: Vec<i64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    Some(gaps[(gaps.len() - 1) / 2])
}

/// Forward-fills `stream` onto the grid `start, start + step, ...` covering
/// `[start, end)`. Each grid point takes the latest sample at or before it.
/// Grid points before the first sample, or at least [`trailing_hold`] seconds
/// past the last one, are missing.
pub fn resample_forward_fill(stream: &SensorStream, start: i64, end: i64, step: i64) -> DenseSeries {
    assert!(step > 0, "resample step must be positive");
    let n = if end > start { ((end - start + step - 1) / step) as usize } else { 0 };
    let arity = stream.kind.arity();
    let mut present = vec![false; n];
    let mut channels = vec![vec![0.0; n]; arity];
    let ts = stream.timestamps();
    let expiry = match (ts.last(), trailing_hold(ts)) {
        (Some(&last), Some(hold)) => last + hold,
        _ => i64::MAX,
    };
    // Index of the first sample strictly after the current grid point.
    let mut next = ts.partition_point(|&t| t <= start);
    for (i, slot) in present.iter_mut().enumerate() {
        let t = start + i as i64 * step;
        if t >= expiry {
            break;
        }
        while next < ts.len() && ts[next] <= t {
            next += 1;
        }
        if next > 0 {
            *slot = true;
            for (c, ch) in stream.sample(next - 1).iter().zip(channels.iter_mut()) {
                ch[i] = *c;
            }
        }
    }
    DenseSeries { present, channels }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl WindowStats {
    pub const ZERO: WindowStats = WindowStats {
        mean: 0.0,
        std: 0.0,
        min: 0.0,
        max: 0.0,
    };

    /// Population statistics of the present values, or `None` if there are none.
    /// Sums run left to right; the mean is clamped into `[min, max]`.
    pub fn of(values: &[f64], present: &[bool]) -> Option<WindowStats> {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (&v, _) in values.iter().zip(present).filter(|(_, &p)| p) {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            return None;
        }
        if min == max {
            return Some(WindowStats { mean: min, std: 0.0, min, max });
        }
        let mean = (sum / n as f64).clamp(min, max);
        let mut ss = 0.0;
        for (&v, _) in values.iter().zip(present).filter(|(_, &p)| p) {
            ss += (v - mean) * (v - mean);
        }
        Some(WindowStats {
            mean,
            std: (ss / n as f64).sqrt(),
            min,
            max,
        })
    }
}

/// Per-window statistics. A window without present values yields `None`
/// (it is padding). The final window may be short.
pub fn window_stats(values: &[f64], present: &[bool], window: usize) -> Vec<Option<WindowStats>> {
    values
        .chunks(window)
        .zip(present.chunks(window))
        .map(|(v, p)| WindowStats::of(v, p))
        .collect()
}

/// Presence one-hot per window: slot `c` is 1 iff code `c` occurs at any
/// present second of the window.
pub fn one_hot_activity(
    codes: &[f64],
    present: &[bool],
    window: usize,
    n_categories: usize,
) -> Result<Vec<Vec<u8>>> {
    codes
        .chunks(window)
        .zip(present.chunks(window))
        .map(|(c, p)| {
            let mut slots = vec![0u8; n_categories];
            for (&code, _) in c.iter().zip(p).filter(|(_, &p)| p) {
                let k = code as usize;
                if code < 0.0 || code.fract() != 0.0 || k >= n_categories {
                    return Err(CoreError::InvalidRecord(format!(
                        "activity code {code} outside 0..{n_categories}"
                    )));
                }
                slots[k] = 1;
            }
            Ok(slots)
        })
        .collect()
}

/// Feature matrix for one day: `WINDOWS_PER_DAY` rows, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySequence {
    pub user_day: UserDay,
    pub n_features: usize,
    pub values: Vec<f64>,
    /// True where the window holds real data.
    pub pad_mask: Vec<bool>,
}

impl DaySequence {
    pub fn len(&self) -> usize {
        self.pad_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pad_mask.is_empty()
    }

    pub fn row(&self, w: usize) -> &[f64] {
        &self.values[w * self.n_features..(w + 1) * self.n_features]
    }

    pub fn valid_windows(&self) -> usize {
        self.pad_mask.iter().filter(|&&m| m).count()
    }
}

/// Column names in matrix order.
pub fn sequence_feature_names(n_categories: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(CONTINUOUS_FEATURES + n_categories);
    for (prefix, kind) in [
        ("acc", SensorKind::Accel),
        ("gps", SensorKind::Gps),
        ("hr", SensorKind::HeartRate),
    ] {
        for ch in kind.channel_names() {
            for stat in ["mean", "std", "min", "max"] {
                if kind == SensorKind::HeartRate {
                    names.push(format!("{prefix}_{stat}"));
                } else {
                    names.push(format!("{prefix}_{ch}_{stat}"));
                }
            }
        }
    }
    names.extend((0..n_categories).map(|c| format!("activity_{c}")));
    names
}

pub const DAILY_FEATURE_NAMES: [&str; DAILY_FEATURES] = [
    "acc_x_mean",
    "acc_x_var",
    "acc_y_mean",
    "acc_y_var",
    "acc_z_mean",
    "acc_z_var",
    "activity_mode",
    "hr_mean",
    "gps_lat_mean",
    "gps_lon_mean",
];

fn check_owner(day: &UserDay, streams: &DayStreams) -> Result<()> {
    for s in streams.values() {
        if s.user_id != day.user_id {
            return Err(CoreError::Invalid(format!(
                "{} stream of {} passed for {day}",
                s.kind, s.user_id
            )));
        }
    }
    Ok(())
}

pub fn build_day_sequence(day: &UserDay, streams: &DayStreams, cfg: &FeatureConfig) -> Result<DaySequence> {
    if streams.values().all(SensorStream::is_empty) {
        return Err(CoreError::EmptyDay(day.to_string()));
    }
    check_owner(day, streams)?;
    let start = day.start_epoch(cfg.tz_offset);
    let end = start + SECONDS_PER_DAY;
    let width = cfg.n_sequence_features();
    let mut values = vec![0.0; WINDOWS_PER_DAY * width];
    let mut pad_mask = vec![false; WINDOWS_PER_DAY];

    let mut offset = 0;
    for kind in [SensorKind::Accel, SensorKind::Gps, SensorKind::HeartRate] {
        if let Some(stream) = streams.get(&kind) {
            let dense = resample_forward_fill(stream, start, end, 1);
            for (c, ch) in dense.channels.iter().enumerate() {
                let col = offset + 4 * c;
                for (w, st) in window_stats(ch, &dense.present, WINDOW_SECONDS).into_iter().enumerate() {
                    if let Some(st) = st {
                        pad_mask[w] = true;
                        values[w * width + col..w * width + col + 4]
                            .copy_from_slice(&[st.mean, st.std, st.min, st.max]);
                    }
                }
            }
        }
        offset += 4 * kind.arity();
    }
    if let Some(stream) = streams.get(&SensorKind::Activity) {
        let dense = resample_forward_fill(stream, start, end, 1);
        let hot = one_hot_activity(&dense.channels[0], &dense.present, WINDOW_SECONDS, cfg.n_categories)?;
        for (w, (slots, p)) in hot.iter().zip(dense.present.chunks(WINDOW_SECONDS)).enumerate() {
            if p.iter().any(|&x| x) {
                pad_mask[w] = true;
            }
            for (k, &b) in slots.iter().enumerate() {
                values[w * width + CONTINUOUS_FEATURES + k] = f64::from(b);
            }
        }
    }
    Ok(DaySequence {
        user_day: day.clone(),
        n_features: width,
        values,
        pad_mask,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyStats {
    pub user_day: UserDay,
    pub values: [f64; DAILY_FEATURES],
}

fn mean_of_present(values: &[f64], present: &[bool]) -> Option<(f64, f64)> {
    WindowStats::of(values, present).map(|s| (s.mean, s.std * s.std))
}

/// Most frequent present code; ties go to the smallest code.
fn mode_of_present(codes: &[f64], present: &[bool]) -> Option<f64> {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for (&c, _) in codes.iter().zip(present).filter(|(_, &p)| p) {
        *counts.entry(c as u64).or_default() += 1;
    }
    // max_by_key returns the last maximum; iterate in reverse so it is the smallest code.
    counts
        .into_iter()
        .rev()
        .max_by_key(|&(_, n)| n)
        .map(|(c, _)| c as f64)
}

pub fn build_daily_stats(day: &UserDay, streams: &DayStreams, cfg: &FeatureConfig) -> Result<DailyStats> {
    check_owner(day, streams)?;
    let start = day.start_epoch(cfg.tz_offset);
    let end = start + SECONDS_PER_DAY;
    let mut v = [0.0; DAILY_FEATURES];
    let dense = |kind| streams.get(&kind).map(|s| resample_forward_fill(s, start, end, 60));

    if let Some(acc) = dense(SensorKind::Accel) {
        for c in 0..3 {
            if let Some((mean, var)) = mean_of_present(&acc.channels[c], &acc.present) {
                v[2 * c] = mean;
                v[2 * c + 1] = var;
            }
        }
    }
    if let Some(act) = dense(SensorKind::Activity) {
        v[6] = mode_of_present(&act.channels[0], &act.present).unwrap_or(0.0);
    }
    if let Some(hr) = dense(SensorKind::HeartRate) {
        v[7] = mean_of_present(&hr.channels[0], &hr.present).map_or(0.0, |m| m.0);
    }
    if let Some(gps) = dense(SensorKind::Gps) {
        for c in 0..2 {
            v[8 + c] = mean_of_present(&gps.channels[c], &gps.present).map_or(0.0, |m| m.0);
        }
    }
    Ok(DailyStats {
        user_day: day.clone(),
        values: v,
    })
}

fn csv_err(line: usize, msg: impl Into<String>) -> CoreError {
    CoreError::Malformed { line, msg: msg.into() }
}

/// One row per window: `user_id,date,window,valid,<features...>`.
pub fn write_sequences_csv<W: Write>(w: W, seqs: &[DaySequence]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let n_features = seqs.first().map_or(DEFAULT_SEQUENCE_FEATURES, |s| s.n_features);
    let mut header = vec!["user_id".to_string(), "date".into(), "window".into(), "valid".into()];
    header.extend(sequence_feature_names(n_features - CONTINUOUS_FEATURES));
    wtr.write_record(&header)?;
    for s in seqs {
        if s.n_features != n_features {
            return Err(CoreError::Invalid("sequences disagree on feature count".into()));
        }
        for wi in 0..s.len() {
            let mut row = vec![
                s.user_day.user_id.clone(),
                s.user_day.date.to_string(),
                wi.to_string(),
                u8::from(s.pad_mask[wi]).to_string(),
            ];
            row.extend(s.row(wi).iter().map(|x| x.to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_sequences_csv<R: Read>(r: R) -> Result<Vec<DaySequence>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let n_features = rdr.headers()?.len().checked_sub(4).ok_or_else(|| csv_err(1, "short header"))?;
    let mut out: Vec<DaySequence> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != n_features + 4 {
            return Err(csv_err(line, "wrong field count"));
        }
        let date = crate::data::parse_date(&rec[1]).ok_or_else(|| csv_err(line, "bad date"))?;
        let day = UserDay::new(&rec[0], date);
        let window: usize = rec[2].parse().map_err(|_| csv_err(line, "bad window index"))?;
        let valid = match &rec[3] {
            "1" => true,
            "0" => false,
            other => return Err(csv_err(line, format!("bad valid flag {other:?}"))),
        };
        if out.last().is_none_or(|s| s.user_day != day) {
            out.push(DaySequence {
                user_day: day,
                n_features,
                values: Vec::with_capacity(WINDOWS_PER_DAY * n_features),
                pad_mask: Vec::with_capacity(WINDOWS_PER_DAY),
            });
        }
        let seq = out.last_mut().unwrap();
        if window != seq.pad_mask.len() {
            return Err(csv_err(line, format!("window {window} out of order")));
        }
        seq.pad_mask.push(valid);
        for f in rec.iter().skip(4) {
            seq.values.push(f.parse().map_err(|_| csv_err(line, format!("bad value {f:?}")))?);
        }
    }
    Ok(out)
}

pub fn write_daily_stats_csv<W: Write>(w: W, stats: &[DailyStats]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let mut header = vec!["user_id", "date"];
    header.extend_from_slice(&DAILY_FEATURE_NAMES);
    wtr.write_record(&header)?;
    for s in stats {
        let mut row = vec![s.user_day.user_id.clone(), s.user_day.date.to_string()];
        row.extend(s.values.iter().map(|x| x.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_daily_stats_csv<R: Read>(r: R) -> Result<Vec<DailyStats>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != DAILY_FEATURES + 2 {
            return Err(csv_err(line, "wrong field count"));
        }
        let date = crate::data::parse_date(&rec[1]).ok_or_else(|| csv_err(line, "bad date"))?;
        let mut values = [0.0; DAILY_FEATURES];
        for (k, f) in rec.iter().skip(2).enumerate() {
            values[k] = f.parse().map_err(|_| csv_err(line, format!("bad value {f:?}")))?;
        }
        out.push(DailyStats {
            user_day: UserDay::new(&rec[0], date),
            values,
        });
    }
    Ok(out)
}
