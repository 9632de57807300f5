use std::io::{Read, Write};

use rayon::prelude::*;

use super::labeler::{addition, Matcher};
use super::taxonomy::IdentityId;
use crate::csvio;
use crate::error::{Error, Result};
use crate::ingest::{ProfileTimeline, Timelines};

/// Half-open observation window `[start, end)` in UTC seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationWindow {
    pub start: i64,
    pub end: i64,
}

impl ObservationWindow {
    pub const UNBOUNDED: Self = Self {
        start: i64::MIN,
        end: i64::MAX,
    };

    pub fn new(start: i64, end: i64) -> Result<Self> {
        if start >= end {
            return Err(Error::invalid(format!("empty observation window [{start}, {end})")));
        }
        Ok(Self { start, end })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CohortStatus {
    IdentityAdded {
        identity: IdentityId,
        change_time: i64,
        pre_profile: String,
        post_profile: String,
    },
    NotAdded {
        change_time: i64,
    },
    AlwaysPositive {
        identity: IdentityId,
    },
    AlwaysNegative,
    Excluded {
        reason: String,
    },
}

impl CohortStatus {
    pub fn name(&self) -> &'static str {
        match self {
            CohortStatus::IdentityAdded { .. } => "identity_added",
            CohortStatus::NotAdded { .. } => "not_added",
            CohortStatus::AlwaysPositive { .. } => "always_positive",
            CohortStatus::AlwaysNegative => "always_negative",
            CohortStatus::Excluded { .. } => "excluded",
        }
    }

    pub fn change_time(&self) -> Option<i64> {
        match self {
            CohortStatus::IdentityAdded { change_time, .. } | CohortStatus::NotAdded { change_time } => {
                Some(*change_time)
            }
            _ => None,
        }
    }

    pub fn is_treated(&self) -> bool {
        matches!(self, CohortStatus::IdentityAdded { .. })
    }

    pub fn is_control_candidate(&self) -> bool {
        matches!(self, CohortStatus::NotAdded { .. })
    }

    fn excluded(reason: impl Into<String>) -> Self {
        CohortStatus::Excluded { reason: reason.into() }
    }
}

/// Assign a user to a cohort with respect to `identity`.
pub fn classify_user(
    matcher: &Matcher,
    timeline: &ProfileTimeline,
    identity: &IdentityId,
    window: ObservationWindow,
) -> CohortStatus {
    let snaps = timeline.within(window.start, window.end);
    match snaps {
        [] => CohortStatus::excluded("no snapshots"),
        [only] => {
            let labels = matcher.label(&only.profile_text);
            if labels.contains(identity) {
                CohortStatus::AlwaysPositive {
                    identity: identity.clone(),
                }
            } else if labels.is_empty() {
                CohortStatus::AlwaysNegative
            } else {
                CohortStatus::excluded("unchanged profile with other identities")
            }
        }
        [pre, post] => {
            let pre_labels = matcher.label(&pre.profile_text);
            let post_labels = matcher.label(&post.profile_text);
            if addition(&pre_labels, &post_labels, identity) {
                CohortStatus::IdentityAdded {
                    identity: identity.clone(),
                    change_time: post.timestamp,
                    pre_profile: pre.profile_text.clone(),
                    post_profile: post.profile_text.clone(),
                }
            } else if pre_labels.is_empty() && post_labels.is_empty() {
                CohortStatus::NotAdded {
                    change_time: post.timestamp,
                }
            } else if pre_labels.has_conflict(&identity.category) || post_labels.has_conflict(&identity.category) {
                CohortStatus::excluded(format!("conflicting {} labels", identity.category))
            } else if pre_labels.contains(identity) {
                CohortStatus::excluded("identity present before change")
            } else {
                CohortStatus::excluded("change did not add identity")
            }
        }
        _ => CohortStatus::excluded("multiple changes"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortRow {
    pub user_id: String,
    pub status: CohortStatus,
}

/// Classify every user in `timelines` (optionally restricted to `keep`), in user order.
pub fn classify_all(
    matcher: &Matcher,
    timelines: &Timelines,
    identity: &IdentityId,
    window: ObservationWindow,
    keep: Option<&std::collections::BTreeSet<String>>,
) -> Vec<CohortRow> {
    let users: Vec<&ProfileTimeline> = timelines
        .by_user
        .values()
        .filter(|tl| keep.map_or(true, |k| k.contains(&tl.user_id)))
        .collect();
    users
        .par_iter()
        .map(|tl| CohortRow {
            user_id: tl.user_id.clone(),
            status: classify_user(matcher, tl, identity, window),
        })
        .collect()
}

pub const COHORT_HEADER: [&str; 7] = [
    "user_id",
    "status",
    "identity",
    "change_time",
    "pre_profile",
    "post_profile",
    "reason",
];

pub fn write_cohort<W: Write>(out: W, rows: &[CohortRow]) -> Result<()> {
    let mut w = csvio::writer(out, &COHORT_HEADER)?;
    for row in rows {
        let (identity, change, pre, post, reason) = match &row.status {
            CohortStatus::IdentityAdded {
                identity,
                change_time,
                pre_profile,
                post_profile,
            } => (identity.to_string(), change_time.to_string(), pre_profile.as_str(), post_profile.as_str(), ""),
            CohortStatus::NotAdded { change_time } => (String::new(), change_time.to_string(), "", "", ""),
            CohortStatus::AlwaysPositive { identity } => (identity.to_string(), String::new(), "", "", ""),
            CohortStatus::AlwaysNegative => (String::new(), String::new(), "", "", ""),
            CohortStatus::Excluded { reason } => (String::new(), String::new(), "", "", reason.as_str()),
        };
        w.write_record([
            row.user_id.as_str(),
            row.status.name(),
            &identity,
            &change,
            pre,
            post,
            reason,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cohort<R: Read>(input: R, name: &str) -> Result<Vec<CohortRow>> {
    let mut rdr = csvio::reader(input, name, &COHORT_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let user_id = rec.get(0).unwrap_or("").to_owned();
        let field = |i: usize| rec.get(i).unwrap_or("").to_owned();
        let status = match rec.get(1).unwrap_or("") {
            "identity_added" => CohortStatus::IdentityAdded {
                identity: csvio::parse_field(&rec, 2, "identity")?,
                change_time: csvio::parse_field(&rec, 3, "change_time")?,
                pre_profile: field(4),
                post_profile: field(5),
            },
            "not_added" => CohortStatus::NotAdded {
                change_time: csvio::parse_field(&rec, 3, "change_time")?,
            },
            "always_positive" => CohortStatus::AlwaysPositive {
                identity: csvio::parse_field(&rec, 2, "identity")?,
            },
            "always_negative" => CohortStatus::AlwaysNegative,
            "excluded" => CohortStatus::Excluded { reason: field(6) },
            other => {
                return Err(Error::Parse {
                    line: rec.position().map_or(0, |p| p.line() as usize),
                    field: "status".into(),
                    message: format!("unknown status `{other}`"),
                })
            }
        };
        rows.push(CohortRow { user_id, status });
    }
    Ok(rows)
}
