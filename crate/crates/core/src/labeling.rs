//! Binary ground-truth labels for one user-day.
//!
//! Q labels compare a survey answer against the user's own mean answer; S
//! labels threshold sleep-session quantities. Every comparison is strict, so
//! values sitting exactly on a threshold map to 0.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{parse_date, Question, SleepSession, SurveyResponse, UserDay};
use crate::error::{CoreError, Result};

pub const LABEL_NAMES: [&str; 7] = ["Q1", "Q2", "Q3", "S1", "S2", "S3", "S4"];

/// Total sleep must lie strictly inside (7h, 9h).
pub const S1_MIN_SLEEP: u64 = 7 * 60 * 60;
pub const S1_MAX_SLEEP: u64 = 9 * 60 * 60;
/// Sleep efficiency must exceed 85 percent.
pub const S2_MIN_EFFICIENCY_PCT: u64 = 85;
/// Sleep onset latency must be under 30 minutes.
pub const S3_MAX_LATENCY: u64 = 30 * 60;
/// Wake after sleep onset must be under 20 minutes.
pub const S4_MAX_WASO: u64 = 20 * 60;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelVector {
    pub user_day: UserDay,
    /// Q1, Q2, Q3, S1, S2, S3, S4, each 0 or 1.
    pub values: [u8; 7],
}

impl LabelVector {
    pub fn q(&self) -> [u8; 3] {
        [self.values[0], self.values[1], self.values[2]]
    }

    pub fn s(&self) -> [u8; 4] {
        [self.values[3], self.values[4], self.values[5], self.values[6]]
    }
}

/// Per-user mean survey answers, plus the pooled mean used for users that
/// have no training responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMeans {
    per_user: BTreeMap<String, [f64; 3]>,
    global: [f64; 3],
}

impl UserMeans {
    pub fn get(&self, user_id: &str) -> Option<[f64; 3]> {
        self.per_user.get(user_id).copied()
    }

    /// Mean of all responses pooled across users.
    pub fn global(&self) -> [f64; 3] {
        self.global
    }

    pub fn get_or_global(&self, user_id: &str) -> [f64; 3] {
        self.get(user_id).unwrap_or(self.global)
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.per_user.keys().map(String::as_str)
    }

    /// Adds a fallback entry (the pooled mean) for every listed user lacking one.
    pub fn with_fallback<'a>(mut self, users: impl IntoIterator<Item = &'a str>) -> Self {
        for u in users {
            if !self.per_user.contains_key(u) {
                self.per_user.insert(u.to_string(), self.global);
            }
        }
        self
    }
}

pub fn compute_user_means(responses: &[SurveyResponse]) -> UserMeans {
    let mut sums: BTreeMap<&str, ([f64; 3], usize)> = BTreeMap::new();
    let mut total = [0.0; 3];
    for r in responses {
        let e = sums.entry(r.user_id.as_str()).or_insert(([0.0; 3], 0));
        for q in Question::ALL {
            let a = f64::from(r.answer(q));
            e.0[q.index()] += a;
            total[q.index()] += a;
        }
        e.1 += 1;
    }
    let per_user = sums
        .into_iter()
        .map(|(u, (s, n))| (u.to_string(), s.map(|x| x / n as f64)))
        .collect();
    let global = if responses.is_empty() {
        [0.0; 3]
    } else {
        total.map(|x| x / responses.len() as f64)
    };
    UserMeans { per_user, global }
}

/// 1 iff `value` is strictly above `mu`.
pub fn above_mean(value: f64, mu: f64) -> u8 {
    u8::from(value > mu)
}

pub fn q_label(r: u8, mu: f64) -> u8 {
    above_mean(f64::from(r), mu)
}

/// S1..S4 for a validated session.
pub fn s_labels(session: &SleepSession) -> [u8; 4] {
    let total = session.total_sleep();
    let s1 = S1_MIN_SLEEP < total && total < S1_MAX_SLEEP;
    // Efficiency total / (wake + total) * 100 > 85, compared without division.
    // A zero denominator implies total == 0, which fails the comparison.
    let in_bed = u64::from(session.wakeupduration) + total;
    let s2 = 100 * total > S2_MIN_EFFICIENCY_PCT * in_bed;
    let s3 = u64::from(session.durationtosleep) < S3_MAX_LATENCY;
    let s4 = session.waso() < S4_MAX_WASO;
    [s1, s2, s3, s4].map(u8::from)
}

pub fn label_all(
    user_day: &UserDay,
    survey: Option<&SurveyResponse>,
    session: Option<&SleepSession>,
    means: &UserMeans,
) -> Result<LabelVector> {
    let survey = survey.ok_or_else(|| CoreError::MissingInput {
        day: user_day.to_string(),
        what: "survey response",
    })?;
    let session = session.ok_or_else(|| CoreError::MissingInput {
        day: user_day.to_string(),
        what: "sleep session",
    })?;
    if survey.user_day() != *user_day || session.user_day() != *user_day {
        return Err(CoreError::Invalid(format!(
            "records for {} / {} do not belong to {user_day}",
            survey.user_day(),
            session.user_day()
        )));
    }
    let mu = means.get(&user_day.user_id).ok_or_else(|| CoreError::MissingInput {
        day: user_day.to_string(),
        what: "user mean",
    })?;
    let s = s_labels(session);
    let mut values = [0u8; 7];
    for q in Question::ALL {
        values[q.index()] = q_label(survey.answer(q), mu[q.index()]);
    }
    values[3..].copy_from_slice(&s);
    Ok(LabelVector {
        user_day: user_day.clone(),
        values,
    })
}

pub const LABELS_HEADER: [&str; 9] = ["user_id", "date", "Q1", "Q2", "Q3", "S1", "S2", "S3", "S4"];

pub fn write_labels_csv<W: Write>(w: W, labels: &[LabelVector]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(LABELS_HEADER)?;
    for l in labels {
        let mut row = vec![l.user_day.user_id.clone(), l.user_day.date.to_string()];
        row.extend(l.values.iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a seven-label table. Duplicate user-days are rejected.
pub fn read_labels_csv<R: Read>(r: R) -> Result<Vec<LabelVector>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.len() != LABELS_HEADER.len()
        || headers.iter().zip(LABELS_HEADER).any(|(a, b)| !a.eq_ignore_ascii_case(b))
    {
        return Err(CoreError::Header {
            path: "labels".into(),
            expected: LABELS_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: String| CoreError::Malformed { line, msg };
        if rec.len() != LABELS_HEADER.len() {
            return Err(bad(format!("expected {} fields", LABELS_HEADER.len())));
        }
        let date = parse_date(&rec[1]).ok_or_else(|| bad(format!("bad date {:?}", &rec[1])))?;
        let user_day = UserDay::new(&rec[0], date);
        let mut values = [0u8; 7];
        for (k, v) in values.iter_mut().enumerate() {
            *v = match &rec[k + 2] {
                "0" => 0,
                "1" => 1,
                other => return Err(bad(format!("{} is not binary: {other:?}", LABEL_NAMES[k]))),
            };
        }
        if !seen.insert(user_day.clone()) {
            return Err(bad(format!("duplicate row for {user_day}")));
        }
        out.push(LabelVector { user_day, values });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day() -> UserDay {
        UserDay::new("u1", parse_date("2024-01-01").unwrap())
    }

    fn session(d: [i64; 6]) -> SleepSession {
        SleepSession::new("u1", parse_date("2024-01-01").unwrap(), d).unwrap()
    }

    fn survey(user: &str, date: &str, a: [i64; 3]) -> SurveyResponse {
        SurveyResponse::new(user, parse_date(date).unwrap(), a).unwrap()
    }

    #[test]
    fn user_means_are_arithmetic() {
        let rs = vec![
            survey("u1", "2024-01-01", [3, 1, 4]),
            survey("u1", "2024-01-02", [4, 1, 4]),
            survey("u1", "2024-01-03", [2, 1, 4]),
            survey("u1", "2024-01-04", [5, 1, 4]),
            survey("u2", "2024-01-01", [4, 2, 2]),
        ];
        let m = compute_user_means(&rs);
        assert_eq!(m.get("u1").unwrap(), [3.5, 1.0, 4.0]);
        assert_eq!(m.get("u2").unwrap(), [4.0, 2.0, 2.0]);
        assert_eq!(m.get("u3"), None);
        assert_eq!(m.global(), [18.0 / 5.0, 6.0 / 5.0, 18.0 / 5.0]);
        assert_eq!(m.get_or_global("u3"), m.global());
    }

    #[test]
    fn q_label_is_strict() {
        assert_eq!(q_label(4, 3.5), 1);
        assert_eq!(q_label(3, 3.5), 0);
        assert_eq!(q_label(4, 4.0), 0);
    }

    #[test]
    fn s_labels_reference_case() {
        let s = session([3600, 7200, 14400, 7200, 600, 300]);
        // t = 28800 in (25200, 32400); 28800 / 32400 = 88.9% > 85; 600 < 1800;
        // waso = 3600 - 600 - 300 = 2700 >= 1200.
        assert_eq!(s_labels(&s), [1, 1, 1, 0]);
    }

    #[test]
    fn s_label_boundaries_map_to_zero() {
        assert_eq!(s_labels(&session([0, 25_200, 0, 0, 0, 0]))[0], 0);
        assert_eq!(s_labels(&session([0, 32_400, 0, 0, 0, 0]))[0], 0);
        assert_eq!(s_labels(&session([0, 25_201, 0, 0, 0, 0]))[0], 1);
        // 17000 / (3000 + 17000) is exactly 85%.
        assert_eq!(s_labels(&session([3000, 17_000, 0, 0, 0, 0]))[1], 0);
        assert_eq!(s_labels(&session([2999, 17_000, 0, 0, 0, 0]))[1], 1);
        assert_eq!(s_labels(&session([0, 0, 0, 0, 0, 0]))[1], 0);
        assert_eq!(s_labels(&session([3600, 0, 0, 0, 1800, 0]))[2], 0);
        assert_eq!(s_labels(&session([3600, 0, 0, 0, 1799, 0]))[2], 1);
        assert_eq!(s_labels(&session([1200, 0, 0, 0, 0, 0]))[3], 0);
        assert_eq!(s_labels(&session([1500, 0, 0, 0, 200, 101]))[3], 1);
    }

    #[test]
    fn label_all_composes() {
        let means = compute_user_means(&[
            survey("u1", "2024-01-01", [4, 3, 2]),
            survey("u1", "2024-01-02", [3, 4, 1]),
        ]);
        let sv = survey("u1", "2024-01-01", [4, 3, 2]);
        let ss = session([3600, 7200, 14400, 7200, 600, 300]);
        let lv = label_all(&day(), Some(&sv), Some(&ss), &means).unwrap();
        // means 3.5, 3.5, 1.5
        assert_eq!(lv.values, [1, 0, 1, 1, 1, 1, 0]);
        assert_eq!(lv.q(), [1, 0, 1]);
        assert_eq!(lv.s(), [1, 1, 1, 0]);
    }

    #[test]
    fn label_all_errors() {
        let sv = survey("u1", "2024-01-01", [4, 3, 2]);
        let ss = session([3600, 7200, 14400, 7200, 600, 300]);
        let empty = compute_user_means(&[]);
        assert!(matches!(
            label_all(&day(), Some(&sv), Some(&ss), &empty),
            Err(CoreError::MissingInput { what: "user mean", .. })
        ));
        let means = compute_user_means(std::slice::from_ref(&sv));
        assert!(matches!(
            label_all(&day(), None, Some(&ss), &means),
            Err(CoreError::MissingInput { what: "survey response", .. })
        ));
        assert!(matches!(
            label_all(&day(), Some(&sv), None, &means),
            Err(CoreError::MissingInput { what: "sleep session", .. })
        ));
        // Answers equal to the user mean never count as above it.
        assert_eq!(label_all(&day(), Some(&sv), Some(&ss), &means).unwrap().q(), [0, 0, 0]);
        let filled = means.with_fallback(["u9"]);
        assert_eq!(filled.get("u9"), Some(filled.global()));
    }

    #[test]
    fn labels_csv_round_trip_and_rejects_duplicates() {
        let rows = vec![
            LabelVector { user_day: day(), values: [1, 0, 1, 1, 0, 0, 1] },
            LabelVector { user_day: UserDay::new("u2", day().date), values: [0; 7] },
        ];
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_labels_csv(buf.as_slice()).unwrap(), rows);
        let dup = "user_id,date,Q1,Q2,Q3,S1,S2,S3,S4\nu1,2024-01-01,0,0,0,0,0,0,0\nu1,2024-01-01,1,0,0,0,0,0,0\n";
        assert!(read_labels_csv(dup.as_bytes()).is_err());
        let nonbinary = "user_id,date,Q1,Q2,Q3,S1,S2,S3,S4\nu1,2024-01-01,2,0,0,0,0,0,0\n";
        assert!(read_labels_csv(nonbinary.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn raising_total_sleep_into_range_sets_s1_only(
            wake in 0i64..20_000, to_sleep in 0i64..5000, below in 0i64..25_200, inside in 25_201i64..32_400,
        ) {
            let wake = wake + to_sleep;
            let lo = session([wake, below, 0, 0, to_sleep, 0]);
            let hi = session([wake, inside, 0, 0, to_sleep, 0]);
            prop_assert_eq!(s_labels(&lo)[0], 0);
            prop_assert_eq!(s_labels(&hi)[0], 1);
            prop_assert_eq!(s_labels(&lo)[2], s_labels(&hi)[2]);
        }

        #[test]
        fn s2_monotone_in_total_sleep(wake in 0i64..30_000, a in 0i64..50_000, b in 0i64..50_000) {
            let (lo, hi) = (a.min(b), a.max(b));
            let s_lo = s_labels(&session([wake, lo, 0, 0, 0, 0]))[1];
            let s_hi = s_labels(&session([wake, hi, 0, 0, 0, 0]))[1];
            prop_assert!(s_lo <= s_hi);
        }

        #[test]
        fn q_label_shift_invariant(r in 1u8..=5, mu in 1.0f64..5.0, c in -3i32..3) {
            let shifted = above_mean(f64::from(r) + f64::from(c), mu + f64::from(c));
            prop_assert_eq!(q_label(r, mu), shifted);
        }
    }
}
