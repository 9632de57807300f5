//! Activity-stream parsing, profile timeline reconstruction and population
//! filters.
//!
//! Input is newline-delimited JSON, one [`ActivityEvent`] per line, optionally
//! gzip-compressed. Every event carries the author's bio at posting time, which
//! is what [`build_timelines`] turns into a run-length deduplicated profile
//! history.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::csvio;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Tweet,
    Retweet,
    Reply,
    Quote,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Tweet => "tweet",
            EventKind::Retweet => "retweet",
            EventKind::Reply => "reply",
            EventKind::Quote => "quote",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "tweet" => Some(EventKind::Tweet),
            "retweet" => Some(EventKind::Retweet),
            "reply" => Some(EventKind::Reply),
            "quote" => Some(EventKind::Quote),
            _ => None,
        }
    }

    /// Original content authored by the user (tweets and replies).
    pub fn is_tweet(self) -> bool {
        matches!(self, EventKind::Tweet | EventKind::Reply)
    }

    /// Reshared content. Quotes are grouped with retweets.
    pub fn is_retweet(self) -> bool {
        matches!(self, EventKind::Retweet | EventKind::Quote)
    }
}

/// One timestamped activity with the author's profile snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEvent {
    pub event_id: String,
    pub user_id: String,
    pub timestamp: i64,
    pub kind: EventKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_user_id: Option<String>,
    pub profile_text: String,
    pub friends_count: u64,
    pub followers_count: u64,
    pub statuses_count: u64,
    pub account_created_at: i64,
    pub verified: bool,
    pub lang: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub timestamp: i64,
    pub profile_text: String,
}

/// Chronological, run-length deduplicated profile history of one user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileTimeline {
    pub user_id: String,
    pub snapshots: Vec<Snapshot>,
}

impl ProfileTimeline {
    pub fn changes(&self) -> usize {
        self.snapshots.len().saturating_sub(1)
    }

    /// Snapshots with `start <= timestamp < end`.
    pub fn within(&self, start: i64, end: i64) -> &[Snapshot] {
        let lo = self.snapshots.partition_point(|s| s.timestamp < start);
        let hi = self.snapshots.partition_point(|s| s.timestamp < end);
        &self.snapshots[lo..hi]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Timelines {
    pub by_user: BTreeMap<String, ProfileTimeline>,
    /// Total number of snapshots across users.
    pub distinct_profiles: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedEvents {
    pub events: Vec<ActivityEvent>,
    pub skipped: usize,
}

fn field_error(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_owned(),
        message: message.into(),
    }
}

fn get_str(obj: &Map<String, Value>, line: usize, key: &str) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(field_error(line, key, "expected a string")),
        None => Err(field_error(line, key, "missing")),
    }
}

fn get_i64(obj: &Map<String, Value>, line: usize, key: &str) -> Result<i64> {
    obj.get(key)
        .ok_or_else(|| field_error(line, key, "missing"))?
        .as_i64()
        .ok_or_else(|| field_error(line, key, "expected an integer"))
}

fn get_u64(obj: &Map<String, Value>, line: usize, key: &str) -> Result<u64> {
    obj.get(key)
        .ok_or_else(|| field_error(line, key, "missing"))?
        .as_u64()
        .ok_or_else(|| field_error(line, key, "expected a non-negative integer"))
}

fn parse_line(raw: &str, line: usize) -> Result<ActivityEvent> {
    let value: Value =
        serde_json::from_str(raw).map_err(|e| field_error(line, "<record>", e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(field_error(line, "<record>", "expected an object"));
    };

    let event_id = get_str(&obj, line, "event_id")?;
    if event_id.is_empty() {
        return Err(field_error(line, "event_id", "empty"));
    }
    let user_id = get_str(&obj, line, "user_id")?;
    if user_id.is_empty() {
        return Err(field_error(line, "user_id", "empty"));
    }
    let timestamp = get_i64(&obj, line, "timestamp")?;
    let kind_raw = get_str(&obj, line, "kind")?;
    let kind = EventKind::parse(&kind_raw)
        .ok_or_else(|| field_error(line, "kind", format!("unknown kind `{kind_raw}`")))?;
    let text = match obj.get("text") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(field_error(line, "text", "expected a string")),
    };
    let target_user_id = match obj.get("target_user_id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        Some(_) => return Err(field_error(line, "target_user_id", "expected a non-empty string")),
    };
    let profile_text = get_str(&obj, line, "profile_text")?;
    let friends_count = get_u64(&obj, line, "friends_count")?;
    let followers_count = get_u64(&obj, line, "followers_count")?;
    let statuses_count = get_u64(&obj, line, "statuses_count")?;
    let account_created_at = get_i64(&obj, line, "account_created_at")?;
    let verified = obj
        .get("verified")
        .ok_or_else(|| field_error(line, "verified", "missing"))?
        .as_bool()
        .ok_or_else(|| field_error(line, "verified", "expected a boolean"))?;
    let lang = get_str(&obj, line, "lang")?;

    if timestamp < account_created_at {
        return Err(field_error(line, "timestamp", "earlier than account_created_at"));
    }
    if kind == EventKind::Reply && target_user_id.is_none() {
        return Err(field_error(line, "target_user_id", "required for replies"));
    }

    Ok(ActivityEvent {
        event_id,
        user_id,
        timestamp,
        kind,
        text,
        target_user_id,
        profile_text,
        friends_count,
        followers_count,
        statuses_count,
        account_created_at,
        verified,
        lang,
    })
}

/// Parse newline-delimited event records.
///
/// Blank lines are ignored. In lenient mode malformed records (including
/// duplicate `event_id`s) are counted in `skipped`; in strict mode the first
/// one aborts with its line number and offending field.
pub fn parse_events<R: BufRead>(reader: R, strict: bool) -> Result<ParsedEvents> {
    let mut out = ParsedEvents::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = parse_line(&line, line_no).and_then(|ev| {
            if seen.contains(&ev.event_id) {
                Err(field_error(line_no, "event_id", format!("duplicate `{}`", ev.event_id)))
            } else {
                Ok(ev)
            }
        });
        match parsed {
            Ok(ev) => {
                seen.insert(ev.event_id.clone());
                out.events.push(ev);
            }
            Err(e) if strict => return Err(e),
            Err(_) => out.skipped += 1,
        }
    }
    Ok(out)
}

/// Open an event file, transparently decompressing gzip input.
pub fn read_events_path(path: &Path, strict: bool) -> Result<ParsedEvents> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        parse_events(BufReader::new(GzDecoder::new(file)), strict)
    } else {
        parse_events(BufReader::new(file), strict)
    }
}

pub fn write_events<W: Write>(mut out: W, events: &[ActivityEvent]) -> Result<()> {
    for ev in events {
        serde_json::to_writer(&mut out, ev).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Rebuild chronological profile timelines.
///
/// Events are ordered by `(timestamp, event_id)` within each user and
/// consecutive identical bios collapse onto the earliest timestamp.
pub fn build_timelines(events: &[ActivityEvent]) -> Timelines {
    let mut per_user: BTreeMap<&str, Vec<&ActivityEvent>> = BTreeMap::new();
    for ev in events {
        per_user.entry(ev.user_id.as_str()).or_default().push(ev);
    }
    let mut timelines = Timelines::default();
    for (user, mut evs) in per_user {
        evs.sort_by(|a, b| (a.timestamp, &a.event_id).cmp(&(b.timestamp, &b.event_id)));
        let mut snapshots: Vec<Snapshot> = Vec::new();
        for ev in evs {
            if snapshots.last().is_some_and(|s| s.profile_text == ev.profile_text) {
                continue;
            }
            // A bio change sharing a timestamp with the previous snapshot would break
            // strict ordering; the earlier event (by id) wins that second.
            if snapshots.last().is_some_and(|s| s.timestamp == ev.timestamp) {
                continue;
            }
            snapshots.push(Snapshot {
                timestamp: ev.timestamp,
                profile_text: ev.profile_text.clone(),
            });
        }
        timelines.distinct_profiles += snapshots.len();
        timelines.by_user.insert(
            user.to_owned(),
            ProfileTimeline {
                user_id: user.to_owned(),
                snapshots,
            },
        );
    }
    timelines
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterPolicy {
    pub allowed_langs: BTreeSet<String>,
    pub exclude_verified: bool,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            allowed_langs: ["en".to_owned()].into_iter().collect(),
            exclude_verified: true,
        }
    }
}

/// Users of `timelines` that survive the verified and language filters.
///
/// The language of a user is the most frequent per-event tag, ties going to the
/// lexicographically smallest tag.
pub fn filter_users(timelines: &Timelines, events: &[ActivityEvent], policy: &FilterPolicy) -> BTreeSet<String> {
    #[derive(Default)]
    struct Tally<'a> {
        verified: bool,
        langs: HashMap<&'a str, usize>,
    }
    let mut tallies: HashMap<&str, Tally> = HashMap::new();
    for ev in events {
        let t = tallies.entry(ev.user_id.as_str()).or_default();
        t.verified |= ev.verified;
        *t.langs.entry(ev.lang.as_str()).or_default() += 1;
    }
    timelines
        .by_user
        .keys()
        .filter(|user| {
            let Some(t) = tallies.get(user.as_str()) else {
                return false;
            };
            if policy.exclude_verified && t.verified {
                return false;
            }
            let modal = t
                .langs
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(lang, _)| *lang);
            modal.is_some_and(|lang| policy.allowed_langs.contains(lang))
        })
        .cloned()
        .collect()
}

/// Events grouped by author and by interaction target.
pub struct EventIndex<'a> {
    by_author: HashMap<&'a str, Vec<&'a ActivityEvent>>,
    by_target: HashMap<&'a str, Vec<&'a ActivityEvent>>,
}

impl<'a> EventIndex<'a> {
    pub fn new(events: &'a [ActivityEvent]) -> Self {
        let mut by_author: HashMap<&str, Vec<&ActivityEvent>> = HashMap::new();
        let mut by_target: HashMap<&str, Vec<&ActivityEvent>> = HashMap::new();
        for ev in events {
            by_author.entry(ev.user_id.as_str()).or_default().push(ev);
            if let Some(target) = ev.target_user_id.as_deref() {
                by_target.entry(target).or_default().push(ev);
            }
        }
        Self { by_author, by_target }
    }

    pub fn authored_by(&self, user: &str) -> &[&'a ActivityEvent] {
        self.by_author.get(user).map_or(&[], Vec::as_slice)
    }

    pub fn targeting(&self, user: &str) -> &[&'a ActivityEvent] {
        self.by_target.get(user).map_or(&[], Vec::as_slice)
    }
}

const TIMELINE_HEADER: [&str; 3] = ["user_id", "timestamp", "profile_text"];

pub fn write_timelines<W: Write>(out: W, timelines: &Timelines, keep: Option<&BTreeSet<String>>) -> Result<()> {
    let mut w = csvio::writer(out, &TIMELINE_HEADER)?;
    for (user, tl) in &timelines.by_user {
        if keep.is_some_and(|k| !k.contains(user)) {
            continue;
        }
        for s in &tl.snapshots {
            w.write_record([user.as_str(), &s.timestamp.to_string(), &s.profile_text])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_timelines<R: Read>(input: R, name: &str) -> Result<Timelines> {
    let mut rdr = csvio::reader(input, name, &TIMELINE_HEADER)?;
    let mut timelines = Timelines::default();
    for rec in rdr.records() {
        let rec = rec?;
        let user: String = csvio::parse_field(&rec, 0, "user_id")?;
        let timestamp: i64 = csvio::parse_field(&rec, 1, "timestamp")?;
        let profile_text = rec.get(2).unwrap_or("").to_owned();
        let tl = timelines
            .by_user
            .entry(user.clone())
            .or_insert_with(|| ProfileTimeline {
                user_id: user,
                snapshots: Vec::new(),
            });
        if tl.snapshots.last().is_some_and(|s| s.timestamp >= timestamp) {
            return Err(Error::invalid(format!(
                "{name}: snapshots of `{}` are not strictly increasing",
                tl.user_id
            )));
        }
        tl.snapshots.push(Snapshot { timestamp, profile_text });
        timelines.distinct_profiles += 1;
    }
    Ok(timelines)
}
