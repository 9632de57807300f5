use std::fmt;
use std::str::FromStr;

use super::scores::{ScoreTable, OFFENSIVE};
use crate::error::{Error, Result};
use crate::ingest::ActivityEvent;
use crate::time::SECONDS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeKind {
    TotalTweets,
    TotalRetweets,
    IdentityTweets,
    IdentityRetweets,
    OffensiveReplies,
    OutDegree,
    InDegree,
    SameIdentityOutDegree,
    SameIdentityInDegree,
}

impl OutcomeKind {
    pub const ALL: [OutcomeKind; 9] = [
        OutcomeKind::TotalTweets,
        OutcomeKind::TotalRetweets,
        OutcomeKind::IdentityTweets,
        OutcomeKind::IdentityRetweets,
        OutcomeKind::OffensiveReplies,
        OutcomeKind::OutDegree,
        OutcomeKind::InDegree,
        OutcomeKind::SameIdentityOutDegree,
        OutcomeKind::SameIdentityInDegree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::TotalTweets => "total_tweets",
            OutcomeKind::TotalRetweets => "total_retweets",
            OutcomeKind::IdentityTweets => "identity_tweets",
            OutcomeKind::IdentityRetweets => "identity_retweets",
            OutcomeKind::OffensiveReplies => "offensive_replies",
            OutcomeKind::OutDegree => "out_degree",
            OutcomeKind::InDegree => "in_degree",
            OutcomeKind::SameIdentityOutDegree => "same_identity_out_degree",
            OutcomeKind::SameIdentityInDegree => "same_identity_in_degree",
        }
    }

    pub fn is_network(self) -> bool {
        matches!(
            self,
            OutcomeKind::OutDegree
                | OutcomeKind::InDegree
                | OutcomeKind::SameIdentityOutDegree
                | OutcomeKind::SameIdentityInDegree
        )
    }

    /// Identity-scored activity kinds, modeled as rates over total activity.
    pub fn has_exposure(self) -> bool {
        matches!(self, OutcomeKind::IdentityTweets | OutcomeKind::IdentityRetweets)
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutcomeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OutcomeKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = OutcomeKind::ALL.iter().map(|k| k.as_str()).collect();
            Error::invalid(format!("unknown outcome `{s}`; expected one of {}", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountConfig {
    pub window_days: i64,
    pub threshold: f64,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self {
            window_days: 30,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Period {
    Pre,
    Post,
}

/// Pre window `[c - w, c)`, post window `(c, c + w]`; the change instant itself is in neither.
pub fn period_of(t: i64, change_time: i64, window_secs: i64) -> Option<Period> {
    if t >= change_time - window_secs && t < change_time {
        Some(Period::Pre)
    } else if t > change_time && t <= change_time + window_secs {
        Some(Period::Post)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeCounts {
    pub y_pre: u64,
    pub y_post: u64,
    pub exposure_pre: u64,
    pub exposure_post: u64,
    /// Identity outcome without a single scored event in either window.
    pub flagged: bool,
}

/// Count a user's own activity around a profile change.
///
/// `authored` are the user's events. For identity kinds, `score_name` names the
/// identity classifier and the exposure is the matching total; only events with
/// score strictly above the threshold count.
pub fn count_outcomes(
    authored: &[&ActivityEvent],
    scores: &ScoreTable,
    score_name: Option<&str>,
    change_time: i64,
    kind: OutcomeKind,
    cfg: CountConfig,
) -> Result<OutcomeCounts> {
    let tweets = match kind {
        OutcomeKind::TotalTweets | OutcomeKind::IdentityTweets => true,
        OutcomeKind::TotalRetweets | OutcomeKind::IdentityRetweets => false,
        other => return Err(Error::invalid(format!("{other} is not an activity count"))),
    };
    let identity = kind.has_exposure();
    let name = match (identity, score_name) {
        (true, Some(n)) => Some(n),
        (true, None) => return Err(Error::invalid(format!("{kind} needs an identity score name"))),
        (false, _) => None,
    };
    let window = cfg.window_days * SECONDS_PER_DAY;
    let mut c = OutcomeCounts::default();
    let mut scored = 0usize;
    for e in authored {
        if e.kind.is_tweet() != tweets {
            continue;
        }
        let Some(period) = period_of(e.timestamp, change_time, window) else {
            continue;
        };
        let (y, total) = match period {
            Period::Pre => (&mut c.y_pre, &mut c.exposure_pre),
            Period::Post => (&mut c.y_post, &mut c.exposure_post),
        };
        *total += 1;
        match name {
            None => *y += 1,
            Some(n) => {
                if let Some(s) = scores.get(&e.event_id, n) {
                    scored += 1;
                    if s > cfg.threshold {
                        *y += 1;
                    }
                }
            }
        }
    }
    if identity {
        c.flagged = scored == 0;
    } else {
        c.exposure_pre = 0;
        c.exposure_post = 0;
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OffensiveCounts {
    pub y_pre: u64,
    pub y_post: u64,
    pub n_id_pre: u64,
    pub n_id_post: u64,
    /// Replies were received but none of them carries an offensiveness score.
    pub flagged: bool,
}

/// Offensive replies received by `user` from other users, plus the user's own
/// identity-scored tweets over the same windows.
pub fn count_offensive_replies(
    user: &str,
    received: &[&ActivityEvent],
    authored: &[&ActivityEvent],
    scores: &ScoreTable,
    identity_score: &str,
    change_time: i64,
    cfg: CountConfig,
) -> OffensiveCounts {
    let window = cfg.window_days * SECONDS_PER_DAY;
    let mut c = OffensiveCounts::default();
    let (mut replies, mut scored) = (0usize, 0usize);
    for e in received {
        if e.kind != crate::ingest::EventKind::Reply || e.user_id == user || e.target_user_id.as_deref() != Some(user) {
            continue;
        }
        let Some(period) = period_of(e.timestamp, change_time, window) else {
            continue;
        };
        replies += 1;
        let Some(s) = scores.get(&e.event_id, OFFENSIVE) else {
            continue;
        };
        scored += 1;
        if s > cfg.threshold {
            match period {
                Period::Pre => c.y_pre += 1,
                Period::Post => c.y_post += 1,
            }
        }
    }
    for e in authored {
        if !e.kind.is_tweet() {
            continue;
        }
        let Some(period) = period_of(e.timestamp, change_time, window) else {
            continue;
        };
        if scores.get(&e.event_id, identity_score).is_some_and(|s| s > cfg.threshold) {
            match period {
                Period::Pre => c.n_id_pre += 1,
                Period::Post => c.n_id_post += 1,
            }
        }
    }
    c.flagged = replies > 0 && scored == 0;
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventKind;
    use proptest::prelude::*;

    const C: i64 = 1_000_000_000;
    const ID: &str = "identity:gender:women";

    fn ev(id: &str, user: &str, t: i64, kind: EventKind, target: Option<&str>) -> ActivityEvent {
        ActivityEvent {
            event_id: id.into(),
            user_id: user.into(),
            timestamp: t,
            kind,
            text: String::new(),
            target_user_id: target.map(Into::into),
            profile_text: String::new(),
            friends_count: 0,
            followers_count: 0,
            statuses_count: 0,
            account_created_at: 0,
            verified: false,
            lang: "en".into(),
        }
    }

    fn refs(v: &[ActivityEvent]) -> Vec<&ActivityEvent> {
        v.iter().collect()
    }

    #[test]
    fn empty_window() {
        let c = count_outcomes(&[], &ScoreTable::new(), Some(ID), C, OutcomeKind::IdentityTweets, CountConfig::default())
            .unwrap();
        assert_eq!((c.y_pre, c.y_post, c.exposure_pre, c.exposure_post), (0, 0, 0, 0));
        assert!(c.flagged);
    }

    #[test]
    fn strict_threshold() {
        let events: Vec<ActivityEvent> = (0..3).map(|i| ev(&format!("e{i}"), "u", C + 10 + i, EventKind::Tweet, None)).collect();
        let mut s = ScoreTable::new();
        for (i, v) in [0.9, 0.5, 0.2].iter().enumerate() {
            s.insert(format!("e{i}"), ID, *v).unwrap();
        }
        let c = count_outcomes(&refs(&events), &s, Some(ID), C, OutcomeKind::IdentityTweets, CountConfig::default()).unwrap();
        assert_eq!(c.y_post, 1);
        assert_eq!(c.exposure_post, 3);
        assert!(!c.flagged);
    }

    #[test]
    fn window_edges() {
        let w = 30 * SECONDS_PER_DAY;
        let events = vec![
            ev("a", "u", C - w - 1, EventKind::Tweet, None),
            ev("b", "u", C - w, EventKind::Tweet, None),
            ev("c", "u", C, EventKind::Tweet, None),
            ev("d", "u", C + w, EventKind::Reply, Some("v")),
            ev("e", "u", C + w + 1, EventKind::Tweet, None),
            ev("f", "u", C + 5, EventKind::Retweet, Some("v")),
        ];
        let c = count_outcomes(&refs(&events), &ScoreTable::new(), None, C, OutcomeKind::TotalTweets, CountConfig::default())
            .unwrap();
        assert_eq!((c.y_pre, c.y_post), (1, 1));
        let r = count_outcomes(&refs(&events), &ScoreTable::new(), None, C, OutcomeKind::TotalRetweets, CountConfig::default())
            .unwrap();
        assert_eq!((r.y_pre, r.y_post), (0, 1));
    }

    #[test]
    fn unscored_events_count_only_toward_totals() {
        let events = vec![ev("a", "u", C + 1, EventKind::Tweet, None), ev("b", "u", C + 2, EventKind::Tweet, None)];
        let mut s = ScoreTable::new();
        s.insert("a", ID, 0.7).unwrap();
        let c = count_outcomes(&refs(&events), &s, Some(ID), C, OutcomeKind::IdentityTweets, CountConfig::default()).unwrap();
        assert_eq!((c.y_post, c.exposure_post), (1, 2));
    }

    #[test]
    fn offensive_replies() {
        let received = vec![
            ev("r1", "x", C + 1, EventKind::Reply, Some("u")),
            ev("r2", "y", C + 2, EventKind::Reply, Some("u")),
            ev("r3", "u", C + 3, EventKind::Reply, Some("u")),
            ev("r4", "z", C + 4, EventKind::Retweet, Some("u")),
        ];
        let authored = vec![ev("t1", "u", C - 5, EventKind::Tweet, None), ev("t2", "u", C + 5, EventKind::Tweet, None)];
        let mut s = ScoreTable::new();
        s.insert("r1", OFFENSIVE, 0.8).unwrap();
        s.insert("r2", OFFENSIVE, 0.3).unwrap();
        s.insert("r3", OFFENSIVE, 0.99).unwrap();
        s.insert("r4", OFFENSIVE, 0.99).unwrap();
        s.insert("t1", ID, 0.6).unwrap();
        s.insert("t2", ID, 0.4).unwrap();
        let c = count_offensive_replies("u", &refs(&received), &refs(&authored), &s, ID, C, CountConfig::default());
        assert_eq!((c.y_pre, c.y_post, c.n_id_pre, c.n_id_post), (0, 1, 1, 0));
        assert!(!c.flagged);
        let none = count_offensive_replies("u", &[], &[], &s, ID, C, CountConfig::default());
        assert_eq!((none.y_pre, none.y_post, none.flagged), (0, 0, false));
    }

    #[test]
    fn outcome_names_round_trip() {
        for k in OutcomeKind::ALL {
            assert_eq!(k.as_str().parse::<OutcomeKind>().unwrap(), k);
        }
        assert!("likes".parse::<OutcomeKind>().is_err());
    }

    proptest! {
        #[test]
        fn threshold_monotone_and_windows_partition(
            offsets in prop::collection::vec(-40i64 * 86400..40 * 86400, 0..40),
            values in prop::collection::vec(0.0f64..=1.0, 40),
            lo in 0.0f64..1.0, hi in 0.0f64..1.0,
        ) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let events: Vec<ActivityEvent> = offsets.iter().enumerate()
                .map(|(i, o)| ev(&format!("e{i}"), "u", C + o, EventKind::Tweet, None)).collect();
            let mut s = ScoreTable::new();
            for i in 0..events.len() {
                s.insert(format!("e{i}"), ID, values[i]).unwrap();
            }
            let r = refs(&events);
            let count = |t: f64| count_outcomes(&r, &s, Some(ID), C, OutcomeKind::IdentityTweets,
                CountConfig { window_days: 30, threshold: t }).unwrap();
            let (a, b) = (count(lo), count(hi));
            prop_assert!(b.y_pre <= a.y_pre && b.y_post <= a.y_post);
            let inside = offsets.iter().filter(|o| period_of(C + **o, C, 30 * 86400).is_some()).count() as u64;
            prop_assert!(a.y_pre + a.y_post <= inside);
            prop_assert_eq!(a.exposure_pre + a.exposure_post, inside);
        }
    }
}
