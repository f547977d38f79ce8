//! Synthetic cohort generator.
//!
//! Every user-day draws latent states: mood `z` (per-user baseline plus a
//! daily deviation), activity intensity `a`, and three sleep-disturbance
//! levels `w`, `l`, `o`. Sensors carry them during wear hours:
//!
//! * heart rate level rises with `z` (survey answers are `3 + 2z`, rounded)
//! * accel x mean rises with `a` (total sleep is `6h + 2.8h * a`)
//! * accel y amplitude rises with `w` (time to get up after waking)
//! * gps latitude excursion rises with `l` (sleep onset latency)
//! * accel z amplitude rises with `o` (wake after sleep onset)
//!
//! With all noise scales at zero the survey answers are a deterministic
//! function of `z` and each of S1, S3, S4 is a threshold on one daily
//! statistic.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use anyhow::{bail, ensure, Result};
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sleepcast_core::data::{parse_date, SensorKind, SensorStream, SleepSession, SurveyResponse, UserDay};
use sleepcast_core::labeling::LabelVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_days: usize,
    pub start_date: String,
    pub seed: u64,
    /// Spread of the per-user mood baseline.
    pub mood_baseline: f64,
    /// Standard deviation multipliers; 0 gives a noiseless cohort.
    pub sensor_noise: f64,
    pub survey_noise: f64,
    pub sleep_noise: f64,
    /// Sampling period of accel, heart rate and activity, in seconds.
    pub sample_interval: i64,
    pub gps_interval: i64,
    /// Local hours during which the wearable records.
    pub wear_start_hour: i64,
    pub wear_end_hour: i64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_users: 4,
            n_days: 30,
            start_date: "2024-03-01".into(),
            seed: 42,
            mood_baseline: 0.3,
            sensor_noise: 0.2,
            survey_noise: 0.5,
            sleep_noise: 0.2,
            sample_interval: 60,
            gps_interval: 300,
            wear_start_hour: 7,
            wear_end_hour: 23,
        }
    }
}

impl SynthSpec {
    pub fn noiseless(mut self) -> Self {
        self.sensor_noise = 0.0;
        self.survey_noise = 0.0;
        self.sleep_noise = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_users >= 1, "synth needs at least one user");
        ensure!(self.n_days >= 1, "synth needs at least one day");
        ensure!(parse_date(&self.start_date).is_some(), "bad start_date {:?}", self.start_date);
        ensure!(self.sample_interval > 0 && self.gps_interval > 0, "sampling intervals must be positive");
        ensure!(
            0 <= self.wear_start_hour && self.wear_start_hour < self.wear_end_hour && self.wear_end_hour <= 24,
            "wear hours must satisfy 0 <= start < end <= 24"
        );
        for (name, v) in [
            ("mood_baseline", self.mood_baseline),
            ("sensor_noise", self.sensor_noise),
            ("survey_noise", self.survey_noise),
            ("sleep_noise", self.sleep_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bail!("{name} must be a non-negative number, got {v}");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latent {
    pub mood: f64,
    pub activity: f64,
    pub wake: f64,
    pub latency: f64,
    pub waso: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub streams: BTreeMap<SensorKind, Vec<SensorStream>>,
    pub sleep: Vec<SleepSession>,
    pub survey: Vec<SurveyResponse>,
    /// Labels computed directly from the generated durations and answers.
    pub truth: Vec<LabelVector>,
    pub latents: BTreeMap<UserDay, Latent>,
}

const HOUR: f64 = 3600.0;
const MINUTE: f64 = 60.0;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn user_id(i: usize) -> String {
    format!("user{i:02}")
}

/// Sleep durations in seconds: wake, deep, light, rem, to-sleep, to-wake.
fn sleep_durations(l: &Latent, noise: f64, rng: &mut ChaCha8Rng) -> [i64; 6] {
    let jitter = |rng: &mut ChaCha8Rng, scale: f64| noise * scale * normal(rng);
    let total = (6.0 * HOUR + 2.8 * HOUR * l.activity + jitter(rng, 0.5 * HOUR)).max(HOUR).round();
    let to_sleep = (5.0 * MINUTE + 45.0 * MINUTE * l.latency + jitter(rng, 5.0 * MINUTE)).max(0.0).round();
    let waso = (2.0 * MINUTE + 36.0 * MINUTE * l.waso + jitter(rng, 5.0 * MINUTE)).max(0.0).round();
    let to_wake = (2.0 * MINUTE + 60.0 * MINUTE * l.wake + jitter(rng, 5.0 * MINUTE)).max(0.0).round();
    let deep = (0.2 * total).round();
    let rem = (0.25 * total).round();
    let light = total - deep - rem;
    let wake = to_sleep + waso + to_wake;
    [wake, deep, light, rem, to_sleep, to_wake].map(|v| v as i64)
}

fn survey_answers(l: &Latent, noise: f64, rng: &mut ChaCha8Rng) -> [i64; 3] {
    [1.0, 0.9, 1.1].map(|gain| (3.0 + 2.0 * gain * l.mood + noise * normal(rng)).round().clamp(1.0, 5.0) as i64)
}

/// Label rules evaluated on plain numbers, independent of the labeling
/// module.
fn truth_labels(day: &UserDay, answers: [i64; 3], means: [f64; 3], d: [i64; 6]) -> LabelVector {
    let [wake, deep, light, rem, to_sleep, to_wake] = d;
    let total = deep + light + rem;
    let mut values = [0u8; 7];
    for k in 0..3 {
        values[k] = u8::from(answers[k] as f64 > means[k]);
    }
    values[3] = u8::from(total > 7 * 3600 && total < 9 * 3600);
    // Efficiency above 85 percent, cross-multiplied to stay in integers.
    values[4] = u8::from(100 * total > 85 * (wake + total));
    values[5] = u8::from(to_sleep < 30 * 60);
    values[6] = u8::from(wake - to_sleep - to_wake < 20 * 60);
    LabelVector {
        user_day: day.clone(),
        values,
    }
}

pub fn generate(spec: &SynthSpec, tz_offset: i64, n_categories: usize) -> Result<Cohort> {
    spec.validate()?;
    let start: NaiveDate = parse_date(&spec.start_date).expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut streams: BTreeMap<SensorKind, Vec<SensorStream>> = BTreeMap::new();
    let mut sleep = Vec::new();
    let mut survey = Vec::new();
    let mut truth = Vec::new();
    let mut latents = BTreeMap::new();
    let sn = spec.sensor_noise;

    for u in 0..spec.n_users {
        let uid = user_id(u);
        let baseline = spec.mood_baseline * rng.random_range(-1.0..=1.0);
        let mut samples: BTreeMap<SensorKind, Vec<(i64, Vec<f64>)>> = BTreeMap::new();
        let mut days = Vec::new();
        for d in 0..spec.n_days {
            let date = start + chrono::Days::new(d as u64);
            let day = UserDay::new(uid.clone(), date);
            let l = Latent {
                mood: (baseline + (1.0 - spec.mood_baseline.min(0.5)) * rng.random_range(-1.0..=1.0)).clamp(-1.0, 1.0),
                activity: rng.random(),
                wake: rng.random(),
                latency: rng.random(),
                waso: rng.random(),
            };
            let midnight = day.start_epoch(tz_offset);
            let (w0, w1) = (spec.wear_start_hour * 3600, spec.wear_end_hour * 3600);
            let span = (w1 - w0) as f64;
            let mut t = w0;
            while t < w1 {
                let s = t as f64;
                let bump = 0.5 * (1.0 - (TAU * (s - w0 as f64) / span).cos());
                let acc = vec![
                    0.1 + 0.6 * l.activity + 0.15 * (TAU * s / 5400.0).sin() + 0.05 * sn * normal(&mut rng),
                    0.1 + (0.05 + 0.3 * l.wake) * (TAU * s / 1800.0).sin() + 0.05 * sn * normal(&mut rng),
                    0.9 + (0.05 + 0.3 * l.waso) * (TAU * s / 2400.0).sin() + 0.05 * sn * normal(&mut rng),
                ];
                samples.entry(SensorKind::Accel).or_default().push((midnight + t, acc));
                let hr = 70.0 + 12.0 * l.mood + 6.0 * bump + 2.0 * sn * normal(&mut rng);
                samples.entry(SensorKind::HeartRate).or_default().push((midnight + t, vec![hr]));
                let level = (l.activity * (n_categories as f64 - 1.0) * (0.5 + 0.5 * bump)).round() as usize;
                let code = if sn > 0.0 && rng.random_bool((0.1 * sn).min(1.0)) {
                    rng.random_range(0..n_categories)
                } else {
                    level.min(n_categories - 1)
                };
                samples.entry(SensorKind::Activity).or_default().push((midnight + t, vec![code as f64]));
                if (t - w0) % spec.gps_interval == 0 {
                    let lat = 37.5 + 0.05 * l.latency * bump + 0.001 * sn * normal(&mut rng);
                    let lon = 127.0 + 0.01 * u as f64 + 0.02 * bump + 0.001 * sn * normal(&mut rng);
                    samples.entry(SensorKind::Gps).or_default().push((midnight + t, vec![lat, lon]));
                }
                t += spec.sample_interval;
            }
            let durations = sleep_durations(&l, spec.sleep_noise, &mut rng);
            let answers = survey_answers(&l, spec.survey_noise, &mut rng);
            sleep.push(SleepSession::new(uid.clone(), date, durations).map_err(anyhow::Error::msg)?);
            survey.push(SurveyResponse::new(uid.clone(), date, answers).map_err(anyhow::Error::msg)?);
            days.push((day.clone(), answers, durations));
            latents.insert(day, l);
        }
        // Integer sums keep an answer equal to its mean exactly equal.
        let mut sums = [0i64; 3];
        for (_, a, _) in &days {
            for k in 0..3 {
                sums[k] += a[k];
            }
        }
        let means = sums.map(|s| s as f64 / days.len() as f64);
        for (day, a, d) in &days {
            truth.push(truth_labels(day, *a, means, *d));
        }
        for kind in SensorKind::ALL {
            let s = samples.remove(&kind).unwrap_or_default();
            streams.entry(kind).or_default().push(SensorStream::from_samples(uid.clone(), kind, s)?);
        }
    }
    Ok(Cohort {
        streams,
        sleep,
        survey,
        truth,
        latents,
    })
}
