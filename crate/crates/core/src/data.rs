//! Domain records and CSV ingestion for sensor streams, sleep sessions and
//! survey responses.
//!
//! Sensor files are strict: a malformed row aborts the parse with its line
//! number. Sleep and survey files are lenient: a row that violates a record
//! invariant is logged, reported in [`Ingested::rejected`] and skipped.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Seconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp(pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SensorKind {
    Accel,
    Gps,
    HeartRate,
    Activity,
}

impl SensorKind {
    pub const ALL: [SensorKind; 4] = [
        SensorKind::Accel,
        SensorKind::Gps,
        SensorKind::HeartRate,
        SensorKind::Activity,
    ];

    pub fn arity(self) -> usize {
        self.channel_names().len()
    }

    pub fn channel_names(self) -> &'static [&'static str] {
        match self {
            SensorKind::Accel => &["x", "y", "z"],
            SensorKind::Gps => &["lat", "lon"],
            SensorKind::HeartRate => &["hr"],
            SensorKind::Activity => &["activity"],
        }
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, SensorKind::Activity)
    }

    /// Conventional file stem used by the pipeline (`accel.csv`, ...).
    pub fn file_stem(self) -> &'static str {
        match self {
            SensorKind::Accel => "accel",
            SensorKind::Gps => "gps",
            SensorKind::HeartRate => "heart_rate",
            SensorKind::Activity => "activity",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

/// Join key for everything recorded about one user on one calendar day.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserDay {
    pub user_id: String,
    pub date: NaiveDate,
}

impl UserDay {
    pub fn new(user_id: impl Into<String>, date: NaiveDate) -> Self {
        Self {
            user_id: user_id.into(),
            date,
        }
    }

    /// Epoch second of local midnight opening this day.
    pub fn start_epoch(&self, tz_offset: i64) -> i64 {
        days_from_epoch(self.date) * SECONDS_PER_DAY - tz_offset
    }
}

impl fmt::Display for UserDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.user_id, self.date)
    }
}

fn epoch_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()
}

pub fn days_from_epoch(date: NaiveDate) -> i64 {
    i64::from(date.num_days_from_ce() - epoch_date().num_days_from_ce())
}

/// Local calendar date of an epoch second under a fixed UTC offset.
pub fn local_date(epoch_seconds: i64, tz_offset: i64) -> NaiveDate {
    let days = (epoch_seconds + tz_offset).div_euclid(SECONDS_PER_DAY);
    epoch_date() + chrono::Duration::days(days)
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

/// Samples of one sensor for one user, sorted by timestamp with no duplicate
/// timestamps. Channel values are stored row-major, `arity` values per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorStream {
    pub user_id: String,
    pub kind: SensorKind,
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl SensorStream {
    /// Builds a stream from unordered samples. Samples are stably sorted and
    /// repeated timestamps collapse to the last occurrence.
    pub fn from_samples(
        user_id: impl Into<String>,
        kind: SensorKind,
        samples: Vec<(i64, Vec<f64>)>,
    ) -> Result<Self> {
        let arity = kind.arity();
        for (ts, vals) in &samples {
            if vals.len() != arity {
                return Err(CoreError::Arity {
                    line: None,
                    expected: arity,
                    found: vals.len(),
                });
            }
            if *ts < 0 {
                return Err(CoreError::InvalidRecord(format!("negative timestamp {ts}")));
            }
        }
        let mut indexed: Vec<(usize, i64)> =
            samples.iter().enumerate().map(|(i, (t, _))| (i, *t)).collect();
        indexed.sort_by_key(|&(i, t)| (t, i));

        let mut timestamps = Vec::with_capacity(indexed.len());
        let mut values = Vec::with_capacity(indexed.len() * arity);
        for (pos, &(i, t)) in indexed.iter().enumerate() {
            if indexed.get(pos + 1).is_some_and(|&(_, next)| next == t) {
                continue;
            }
            timestamps.push(t);
            values.extend_from_slice(&samples[i].1);
        }
        Ok(Self {
            user_id: user_id.into(),
            kind,
            timestamps,
            values,
        })
    }

    pub fn empty(user_id: impl Into<String>, kind: SensorKind) -> Self {
        Self {
            user_id: user_id.into(),
            kind,
            timestamps: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    /// Channel values of sample `i`.
    pub fn sample(&self, i: usize) -> &[f64] {
        let a = self.kind.arity();
        &self.values[i * a..(i + 1) * a]
    }

    pub fn samples(&self) -> impl Iterator<Item = (i64, &[f64])> + '_ {
        let a = self.kind.arity();
        self.timestamps
            .iter()
            .copied()
            .zip(self.values.chunks_exact(a))
    }

    /// Checks that every categorical code is an integer in `0..n_categories`.
    pub fn validate_categories(&self, n_categories: usize) -> Result<()> {
        if !self.kind.is_categorical() {
            return Ok(());
        }
        for (t, v) in self.samples() {
            let code = v[0];
            if code < 0.0 || code.fract() != 0.0 || code >= n_categories as f64 {
                return Err(CoreError::InvalidRecord(format!(
                    "activity code {code} at t={t} outside 0..{n_categories}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SleepSession {
    pub user_id: String,
    pub date: NaiveDate,
    pub wakeupduration: u32,
    pub deepsleepduration: u32,
    pub lightsleepduration: u32,
    pub remsleepduration: u32,
    pub durationtosleep: u32,
    pub durationtowakeup: u32,
}

impl SleepSession {
    /// Validates raw (possibly negative) durations, in CSV column order after
    /// the date: wake, deep, light, rem, to-sleep, to-wake.
    pub fn new(
        user_id: impl Into<String>,
        date: NaiveDate,
        durations: [i64; 6],
    ) -> std::result::Result<Self, String> {
        const NAMES: [&str; 6] = [
            "wakeupduration",
            "deepsleepduration",
            "lightsleepduration",
            "remsleepduration",
            "durationtosleep",
            "durationtowakeup",
        ];
        let mut d = [0u32; 6];
        for (k, (&raw, name)) in durations.iter().zip(NAMES).enumerate() {
            d[k] = u32::try_from(raw).map_err(|_| format!("{name}={raw} is not a valid duration"))?;
        }
        let [wake, deep, light, rem, to_sleep, to_wake] = d;
        if u64::from(to_sleep) + u64::from(to_wake) > u64::from(wake) {
            return Err(format!(
                "durationtosleep+durationtowakeup={} exceeds wakeupduration={wake}",
                u64::from(to_sleep) + u64::from(to_wake)
            ));
        }
        Ok(Self {
            user_id: user_id.into(),
            date,
            wakeupduration: wake,
            deepsleepduration: deep,
            lightsleepduration: light,
            remsleepduration: rem,
            durationtosleep: to_sleep,
            durationtowakeup: to_wake,
        })
    }

    pub fn user_day(&self) -> UserDay {
        UserDay::new(self.user_id.clone(), self.date)
    }

    pub fn total_sleep(&self) -> u64 {
        u64::from(self.deepsleepduration)
            + u64::from(self.lightsleepduration)
            + u64::from(self.remsleepduration)
    }

    /// Wake after sleep onset; never negative for a validated session.
    pub fn waso(&self) -> u64 {
        u64::from(self.wakeupduration)
            - u64::from(self.durationtosleep)
            - u64::from(self.durationtowakeup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Question {
    Q1,
    Q2,
    Q3,
}

impl Question {
    pub const ALL: [Question; 3] = [Question::Q1, Question::Q2, Question::Q3];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub user_id: String,
    pub date: NaiveDate,
    pub q1: u8,
    pub q2: u8,
    pub q3: u8,
}

impl SurveyResponse {
    pub fn new(
        user_id: impl Into<String>,
        date: NaiveDate,
        answers: [i64; 3],
    ) -> std::result::Result<Self, String> {
        let mut q = [0u8; 3];
        for (k, &a) in answers.iter().enumerate() {
            if !(1..=5).contains(&a) {
                return Err(format!("q{}={a} outside the 1-5 scale", k + 1));
            }
            q[k] = a as u8;
        }
        Ok(Self {
            user_id: user_id.into(),
            date,
            q1: q[0],
            q2: q[1],
            q3: q[2],
        })
    }

    pub fn answer(&self, q: Question) -> u8 {
        match q {
            Question::Q1 => self.q1,
            Question::Q2 => self.q2,
            Question::Q3 => self.q3,
        }
    }

    pub fn user_day(&self) -> UserDay {
        UserDay::new(self.user_id.clone(), self.date)
    }
}

/// A row skipped during lenient ingestion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowRejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub rejected: Vec<RowRejection>,
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(rdr)
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| CoreError::io(path, e))
}

fn check_header(headers: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    let found: Vec<&str> = headers.iter().collect();
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| !a.eq_ignore_ascii_case(b)) {
        return Err(CoreError::Header {
            path: path.display().to_string(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

/// Parses a sensor CSV into one stream per user (ordered by user id).
pub fn parse_sensor_file(path: &Path, kind: SensorKind) -> Result<Vec<SensorStream>> {
    parse_sensor_reader(open(path)?, kind)
}

pub fn parse_sensor_reader<R: Read>(rdr: R, kind: SensorKind) -> Result<Vec<SensorStream>> {
    let mut rdr = csv_reader(rdr);
    let arity = kind.arity();
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 + arity {
        return Err(CoreError::Arity {
            line: Some(1),
            expected: arity,
            found: headers.len().saturating_sub(2),
        });
    }
    let mut by_user: BTreeMap<String, Vec<(i64, Vec<f64>)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != 2 + arity {
            return Err(CoreError::Arity {
                line: Some(line),
                expected: arity,
                found: rec.len().saturating_sub(2),
            });
        }
        let user = rec[0].to_string();
        if user.is_empty() {
            return Err(CoreError::Malformed {
                line,
                msg: "empty user_id".into(),
            });
        }
        let ts: i64 = rec[1].parse().map_err(|_| CoreError::Malformed {
            line,
            msg: format!("bad timestamp {:?}", &rec[1]),
        })?;
        if ts < 0 {
            return Err(CoreError::Malformed {
                line,
                msg: format!("negative timestamp {ts}"),
            });
        }
        let mut vals = Vec::with_capacity(arity);
        for field in rec.iter().skip(2) {
            let v: f64 = field.parse().map_err(|_| CoreError::Malformed {
                line,
                msg: format!("bad channel value {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(CoreError::Malformed {
                    line,
                    msg: format!("non-finite channel value {field:?}"),
                });
            }
            if kind.is_categorical() && (v < 0.0 || v.fract() != 0.0) {
                return Err(CoreError::Malformed {
                    line,
                    msg: format!("category code {field:?} is not a non-negative integer"),
                });
            }
            vals.push(v);
        }
        by_user.entry(user).or_default().push((ts, vals));
    }
    by_user
        .into_iter()
        .map(|(user, samples)| SensorStream::from_samples(user, kind, samples))
        .collect()
}

pub const SLEEP_HEADER: [&str; 8] = [
    "user_id",
    "date",
    "wakeupduration",
    "deepsleepduration",
    "lightsleepduration",
    "remsleepduration",
    "durationtosleep",
    "durationtowakeup",
];

pub const SURVEY_HEADER: [&str; 5] = ["user_id", "date", "q1", "q2", "q3"];

/// Shared shape of the lenient parsers: fixed header, per-row builder.
fn parse_lenient<R: Read, T>(
    rdr: R,
    path: &Path,
    header: &[&str],
    build: impl Fn(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<Ingested<T>> {
    let mut rdr = csv_reader(rdr);
    check_header(rdr.headers()?, header, path)?;
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let outcome = if rec.len() != header.len() {
            Err(format!("expected {} fields, found {}", header.len(), rec.len()))
        } else {
            build(&rec)
        };
        match outcome {
            Ok(r) => records.push(r),
            Err(reason) => {
                log::warn!("{}:{line}: rejected row: {reason}", path.display());
                rejected.push(RowRejection { line, reason });
            }
        }
    }
    Ok(Ingested { records, rejected })
}

fn user_and_date(rec: &csv::StringRecord) -> std::result::Result<(String, NaiveDate), String> {
    let user = rec[0].to_string();
    if user.is_empty() {
        return Err("empty user_id".into());
    }
    let date = parse_date(&rec[1]).ok_or_else(|| format!("bad date {:?}", &rec[1]))?;
    Ok((user, date))
}

fn int_field(rec: &csv::StringRecord, i: usize) -> std::result::Result<i64, String> {
    rec[i]
        .parse::<i64>()
        .map_err(|_| format!("column {} is not an integer: {:?}", i + 1, &rec[i]))
}

pub fn parse_sleep_file(path: &Path) -> Result<Ingested<SleepSession>> {
    parse_sleep_reader(open(path)?, path)
}

pub fn parse_sleep_reader<R: Read>(rdr: R, path: &Path) -> Result<Ingested<SleepSession>> {
    parse_lenient(rdr, path, &SLEEP_HEADER, |rec| {
        let (user, date) = user_and_date(rec)?;
        let mut d = [0i64; 6];
        for (k, slot) in d.iter_mut().enumerate() {
            *slot = int_field(rec, k + 2)?;
        }
        SleepSession::new(user, date, d)
    })
}

pub fn parse_survey_file(path: &Path) -> Result<Ingested<SurveyResponse>> {
    parse_survey_reader(open(path)?, path)
}

pub fn parse_survey_reader<R: Read>(rdr: R, path: &Path) -> Result<Ingested<SurveyResponse>> {
    parse_lenient(rdr, path, &SURVEY_HEADER, |rec| {
        let (user, date) = user_and_date(rec)?;
        let answers = [int_field(rec, 2)?, int_field(rec, 3)?, int_field(rec, 4)?];
        SurveyResponse::new(user, date, answers)
    })
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// Writes streams of one kind as a sensor CSV. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_sensor_csv<W: Write>(w: W, kind: SensorKind, streams: &[SensorStream]) -> Result<()> {
    let mut wtr = csv_writer(w);
    let mut header = vec!["user_id", "timestamp"];
    header.extend_from_slice(kind.channel_names());
    wtr.write_record(&header)?;
    for s in streams {
        for (t, vals) in s.samples() {
            let mut row = vec![s.user_id.clone(), t.to_string()];
            row.extend(vals.iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sleep_csv<W: Write>(w: W, sessions: &[SleepSession]) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(SLEEP_HEADER)?;
    for s in sessions {
        wtr.write_record([
            s.user_id.clone(),
            s.date.to_string(),
            s.wakeupduration.to_string(),
            s.deepsleepduration.to_string(),
            s.lightsleepduration.to_string(),
            s.remsleepduration.to_string(),
            s.durationtosleep.to_string(),
            s.durationtowakeup.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_survey_csv<W: Write>(w: W, responses: &[SurveyResponse]) -> Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(SURVEY_HEADER)?;
    for r in responses {
        wtr.write_record([
            r.user_id.clone(),
            r.date.to_string(),
            r.q1.to_string(),
            r.q2.to_string(),
            r.q3.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Splits a stream into local calendar days `[00:00, 24:00)` after shifting by
/// `tz_offset` seconds. Days without samples are absent.
pub fn segment_by_day(stream: &SensorStream, tz_offset: i64) -> BTreeMap<UserDay, SensorStream> {
    let mut out: BTreeMap<UserDay, SensorStream> = BTreeMap::new();
    let mut current: Option<(UserDay, SensorStream)> = None;
    for (t, vals) in stream.samples() {
        let day = UserDay::new(stream.user_id.clone(), local_date(t, tz_offset));
        match &mut current {
            Some((d, s)) if *d == day => {
                s.timestamps.push(t);
                s.values.extend_from_slice(vals);
            }
            _ => {
                if let Some((d, s)) = current.take() {
                    out.insert(d, s);
                }
                let mut s = SensorStream::empty(stream.user_id.clone(), stream.kind);
                s.timestamps.push(t);
                s.values.extend_from_slice(vals);
                current = Some((day, s));
            }
        }
    }
    if let Some((d, s)) = current {
        out.insert(d, s);
    }
    out
}
