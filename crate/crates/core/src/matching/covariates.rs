use std::io::{Read, Write};

use crate::csvio;
use crate::error::{Error, Result};
use crate::ingest::ActivityEvent;
use crate::time::{week_bucket, MONTH_SECONDS, SECONDS_PER_DAY};

pub const COVARIATE_NAMES: [&str; 6] = [
    "days_since_creation",
    "n_friends",
    "n_followers",
    "n_posts_total",
    "n_tweets_prev_month",
    "n_retweets_prev_month",
];

/// User covariates measured at the profile-change date.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CovariateVector {
    pub days_since_creation: f64,
    pub n_friends: f64,
    pub n_followers: f64,
    pub n_posts_total: f64,
    pub n_tweets_prev_month: f64,
    pub n_retweets_prev_month: f64,
}

impl CovariateVector {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.days_since_creation,
            self.n_friends,
            self.n_followers,
            self.n_posts_total,
            self.n_tweets_prev_month,
            self.n_retweets_prev_month,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            days_since_creation: a[0],
            n_friends: a[1],
            n_followers: a[2],
            n_posts_total: a[3],
            n_tweets_prev_month: a[4],
            n_retweets_prev_month: a[5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in COVARIATE_NAMES.iter().zip(self.to_array()) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("covariate {name} = {v} is not a finite non-negative number")));
            }
        }
        Ok(())
    }
}

/// Covariates of `user` at `change_time`, from the user's own events (`authored`
/// need not be sorted). Counters come from the latest event at or before the
/// change; `None` when there is no such event.
pub fn extract_covariates(authored: &[&ActivityEvent], change_time: i64) -> Option<CovariateVector> {
    let latest = authored
        .iter()
        .filter(|e| e.timestamp <= change_time)
        .max_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.event_id.cmp(&b.event_id)))?;
    let start = change_time - MONTH_SECONDS;
    let prev = authored.iter().filter(|e| e.timestamp >= start && e.timestamp < change_time);
    let (mut tweets, mut retweets) = (0u64, 0u64);
    for e in prev {
        if e.kind.is_tweet() {
            tweets += 1;
        } else {
            retweets += 1;
        }
    }
    Some(CovariateVector {
        days_since_creation: ((change_time - latest.account_created_at) as f64 / SECONDS_PER_DAY as f64).max(0.0),
        n_friends: latest.friends_count as f64,
        n_followers: latest.followers_count as f64,
        n_posts_total: latest.statuses_count as f64,
        n_tweets_prev_month: tweets as f64,
        n_retweets_prev_month: retweets as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateRow {
    pub user_id: String,
    pub change_time: i64,
    pub covariates: CovariateVector,
}

impl CovariateRow {
    pub fn week(&self) -> i64 {
        week_bucket(self.change_time)
    }
}

pub const COVARIATE_HEADER: [&str; 9] = [
    "user_id",
    "week",
    "change_time",
    "days_since_creation",
    "n_friends",
    "n_followers",
    "n_posts_total",
    "n_tweets_prev_month",
    "n_retweets_prev_month",
];

pub fn write_covariates<W: Write>(out: W, rows: &[CovariateRow]) -> Result<()> {
    let mut w = csvio::writer(out, &COVARIATE_HEADER)?;
    for r in rows {
        let mut rec = vec![r.user_id.clone(), r.week().to_string(), r.change_time.to_string()];
        rec.extend(r.covariates.to_array().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_covariates<R: Read>(input: R, name: &str) -> Result<Vec<CovariateRow>> {
    let mut rdr = csvio::reader(input, name, &COVARIATE_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut a = [0.0; 6];
        for (i, slot) in a.iter_mut().enumerate() {
            *slot = csvio::parse_field(&rec, i + 3, COVARIATE_NAMES[i])?;
        }
        let row = CovariateRow {
            user_id: rec.get(0).unwrap_or("").to_owned(),
            change_time: csvio::parse_field(&rec, 2, "change_time")?,
            covariates: CovariateVector::from_array(a),
        };
        let week: i64 = csvio::parse_field(&rec, 1, "week")?;
        if week != row.week() {
            return Err(Error::invalid(format!(
                "{name}: week {week} of `{}` disagrees with its change time",
                row.user_id
            )));
        }
        row.covariates.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventKind;

    fn ev(id: &str, t: i64, kind: EventKind, statuses: u64) -> ActivityEvent {
        ActivityEvent {
            event_id: id.into(),
            user_id: "u".into(),
            timestamp: t,
            kind,
            text: String::new(),
            target_user_id: (kind != EventKind::Tweet).then(|| "v".into()),
            profile_text: String::new(),
            friends_count: 3,
            followers_count: 4,
            statuses_count: statuses,
            account_created_at: 0,
            verified: false,
            lang: "en".into(),
        }
    }

    #[test]
    fn counts_previous_month_by_kind() {
        let c = 100 * SECONDS_PER_DAY;
        let events = [
            ev("a", c - MONTH_SECONDS - 1, EventKind::Tweet, 1),
            ev("b", c - MONTH_SECONDS, EventKind::Tweet, 2),
            ev("c", c - 10, EventKind::Reply, 3),
            ev("d", c - 5, EventKind::Quote, 4),
            ev("e", c - 4, EventKind::Retweet, 5),
            ev("f", c, EventKind::Tweet, 6),
            ev("g", c + 1, EventKind::Tweet, 7),
        ];
        let refs: Vec<&ActivityEvent> = events.iter().collect();
        let cov = extract_covariates(&refs, c).unwrap();
        assert_eq!(cov.days_since_creation, 100.0);
        assert_eq!(cov.n_posts_total, 6.0);
        assert_eq!(cov.n_tweets_prev_month, 2.0);
        assert_eq!(cov.n_retweets_prev_month, 2.0);
        assert!(extract_covariates(&refs, -1).is_none());
    }

    #[test]
    fn csv_round_trip_and_week_check() {
        let rows = vec![CovariateRow {
            user_id: "u".into(),
            change_time: 1_600_000_000,
            covariates: CovariateVector::from_array([1.5, 2.0, 3.0, 4.0, 5.0, 6.0]),
        }];
        let mut buf = Vec::new();
        write_covariates(&mut buf, &rows).unwrap();
        assert_eq!(read_covariates(buf.as_slice(), "cov").unwrap(), rows);
        let bad = String::from_utf8(buf).unwrap().replace(&rows[0].week().to_string(), "0");
        assert!(read_covariates(bad.as_bytes(), "cov").is_err());
    }
}
