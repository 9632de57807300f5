use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrueBeta;
use super::generate::{user_rng, Cohort, PeriodDraw, SynthUser};
use crate::csvio;
use crate::error::{Error, Result};
use crate::identity_rules::{IdentityId, Matcher, Taxonomy};
use crate::ingest::{write_events, ActivityEvent, EventKind};
use crate::panel::{write_scores, ScoreTable, OFFENSIVE};
use crate::time::{SECONDS_PER_DAY, SECONDS_PER_WEEK};

/// Bios that carry no identity under the bundled taxonomy.
pub const FILLER_BIOS: [&str; 24] = [
    "coffee first",
    "weekend hiker",
    "collector of houseplants",
    "tea and crosswords",
    "sunsets and long walks",
    "lover of old films",
    "amateur baker",
    "here for the memes",
    "chasing good light",
    "books over everything",
    "cat person",
    "jazz on sundays",
    "learning to sail",
    "just vibing",
    "trail runner in training",
    "opinions change often",
    "rainy day reader",
    "probably at the beach",
    "soup enthusiast",
    "occasional poet",
    "board game night regular",
    "bird watcher",
    "always hungry",
    "pizza connoisseur",
];

const WORDS: [&str; 16] = [
    "today", "weather", "lunch", "music", "weekend", "game", "news", "coffee", "train", "movie", "garden", "city",
    "morning", "rain", "book", "walk",
];

const REPLIERS: usize = 200;
const ALTER_PREFIX: &str = "a";
const NEUTRAL_PREFIX: &str = "n";

/// One user as recorded in the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthUser {
    pub user_id: String,
    pub identity: Option<String>,
    pub change_time: i64,
    pub confounder: f64,
    pub expected_pre: f64,
    pub expected_post: f64,
}

/// What an emitted event really is, independent of its classifier scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub event_id: String,
    pub user_id: String,
    /// The identity a tweet is about, if any.
    pub identity: Option<String>,
    pub offensive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEffect {
    pub identity: String,
    /// Log-scale treatment effect on the simulated outcome.
    pub b4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub outcome: String,
    pub alpha: f64,
    pub beta: TrueBeta,
    pub effects: Vec<TruthEffect>,
    /// Log ratio of treated post-change to pre-change same-identity out-edge
    /// rates, when the scenario has a network.
    pub homophily_log_ratio: Option<f64>,
    #[serde(skip)]
    pub users: Vec<TruthUser>,
    #[serde(skip)]
    pub events: Vec<TruthEvent>,
}

pub const TRUTH_USER_HEADER: [&str; 6] = ["user_id", "identity", "change_time", "confounder", "expected_pre", "expected_post"];
pub const TRUTH_EVENT_HEADER: [&str; 4] = ["event_id", "user_id", "identity", "offensive"];

/// Events, classifier scores and ground truth of one cohort.
#[derive(Debug, Clone)]
pub struct Materialized {
    /// Sorted by `(timestamp, event_id)`.
    pub events: Vec<ActivityEvent>,
    pub scores: ScoreTable,
    pub truth: GroundTruth,
}

/// Examples of `identity` that label as exactly that identity, alone and after
/// every filler bio.
fn usable_examples(matcher: &Matcher, taxonomy: &Taxonomy, identity: &IdentityId) -> Result<Vec<String>> {
    let sub = taxonomy
        .subcategory(identity)
        .ok_or_else(|| Error::Config(format!("identity `{identity}` is not in the bundled taxonomy")))?;
    let only = |text: &str| {
        let labels = matcher.label(text);
        labels.identities().count() == 1 && labels.contains(identity)
    };
    let usable: Vec<String> = sub
        .examples
        .iter()
        .filter(|ex| only(ex) && FILLER_BIOS.iter().all(|f| only(&format!("{f} | {ex}"))))
        .cloned()
        .collect();
    if usable.is_empty() {
        return Err(Error::Config(format!("no example of `{identity}` labels unambiguously")));
    }
    Ok(usable)
}

fn alter_id(pool: Option<usize>, k: usize) -> String {
    match pool {
        Some(i) => format!("{ALTER_PREFIX}{i}-{k:05}"),
        None => format!("{NEUTRAL_PREFIX}-{k:05}"),
    }
}

fn replier_id(k: usize) -> String {
    format!("r-{k:04}")
}

fn score<R: Rng>(rng: &mut R, above: bool) -> f64 {
    let u: f64 = rng.random();
    let v = if above { 0.5001 + 0.4999 * u } else { 0.4999 * u };
    (v * 1e4).round() / 1e4
}

fn text<R: Rng>(rng: &mut R, lead: Option<&str>) -> String {
    let mut parts: Vec<&str> = lead.into_iter().collect();
    for _ in 0..3 {
        parts.push(WORDS[rng.random_range(0..WORDS.len())]);
    }
    parts.join(" ")
}

/// Counters shared by every event of one account.
struct Account {
    id: String,
    bio_pre: String,
    bio_post: String,
    change_time: i64,
    friends: u64,
    followers: u64,
    posts: u64,
    created: i64,
}

impl Account {
    fn event(&self, event_id: String, timestamp: i64, kind: EventKind, text: String, target: Option<String>) -> ActivityEvent {
        ActivityEvent {
            event_id,
            user_id: self.id.clone(),
            timestamp,
            kind,
            text,
            target_user_id: target,
            profile_text: if timestamp < self.change_time { &self.bio_pre } else { &self.bio_post }.clone(),
            friends_count: self.friends,
            followers_count: self.followers,
            statuses_count: self.posts,
            account_created_at: self.created,
            verified: false,
            lang: "en".into(),
        }
    }
}

struct UserOutput {
    events: Vec<ActivityEvent>,
    scores: Vec<(String, String, f64)>,
    truth: Vec<TruthEvent>,
    alters: Vec<(Option<usize>, usize)>,
    repliers: Vec<usize>,
}

struct Shared<'a> {
    cohort: &'a Cohort,
    examples: &'a [Vec<String>],
    score_names: Vec<String>,
}

fn materialize_user(shared: &Shared<'_>, index: u64, user: &SynthUser) -> UserOutput {
    let cfg = &shared.cohort.config;
    let mut rng = user_rng(cfg.seed, 2, index);
    let filler = rng.random_range(0..FILLER_BIOS.len());
    let bio_pre = FILLER_BIOS[filler];
    let bio_post = match user.treated_identity {
        Some(a) => {
            let ex = &shared.examples[a];
            format!("{bio_pre} | {}", ex[rng.random_range(0..ex.len())])
        }
        None => FILLER_BIOS[(filler + 1 + rng.random_range(0..FILLER_BIOS.len() - 1)) % FILLER_BIOS.len()].to_owned(),
    };
    let c = user.change_time;
    let cov = &user.covariates;
    let ego = Account {
        id: user.user_id.clone(),
        bio_pre: bio_pre.to_owned(),
        bio_post,
        change_time: c,
        friends: cov.n_friends as u64,
        followers: cov.n_followers as u64,
        posts: cov.n_posts_total as u64,
        created: user.account_created_at,
    };
    let mut out = UserOutput {
        events: Vec::new(),
        scores: Vec::new(),
        truth: Vec::new(),
        alters: Vec::new(),
        repliers: Vec::new(),
    };
    let mut seq = 0usize;
    let mut next_id = || {
        seq += 1;
        format!("{}-{seq:05}", user.user_id)
    };
    let n_ids = shared.cohort.identities.len();

    // The anchor fixes the pre-change bio well before the 30-day window; the
    // change tweet carries the new bio at the change instant.
    for (t, lead) in [(c - 35 * SECONDS_PER_DAY, None), (c, None)] {
        let id = next_id();
        let tx = text(&mut rng, lead);
        out.events.push(ego.event(id.clone(), t, EventKind::Tweet, tx, None));
        out.truth.push(TruthEvent {
            event_id: id,
            user_id: ego.id.clone(),
            identity: None,
            offensive: false,
        });
    }

    let month = 30 * SECONDS_PER_DAY;
    for (post, draw) in [(false, &user.pre), (true, &user.post)] {
        let when = |rng: &mut rand_chacha::ChaCha8Rng| {
            let o = rng.random_range(0..month);
            if post { c + 1 + o } else { c - month + o }
        };
        // Own tweets: identity tweets of each identity, then the rest.
        let mut tweets: Vec<(String, Option<usize>)> = Vec::new();
        for a in 0..n_ids {
            for _ in 0..draw.identity_tweets[a] {
                tweets.push((next_id(), Some(a)));
            }
        }
        for _ in 0..draw.other_tweets {
            tweets.push((next_id(), None));
        }
        for (id, about) in &tweets {
            let t = when(&mut rng);
            let lead = about.map(|a| shared.examples[a][0].as_str());
            let tx = text(&mut rng, lead);
            out.events.push(ego.event(id.clone(), t, EventKind::Tweet, tx, None));
            out.truth.push(TruthEvent {
                event_id: id.clone(),
                user_id: ego.id.clone(),
                identity: about.map(|a| shared.cohort.identities[a].to_string()),
                offensive: false,
            });
        }
        score_identities(&mut rng, shared, draw, &tweets, &mut out.scores);

        for _ in 0..draw.retweets {
            let id = next_id();
            let t = when(&mut rng);
            let tx = text(&mut rng, None);
            out.events.push(ego.event(id, t, EventKind::Retweet, tx, None));
        }

        // Replies received, each scored for offensiveness.
        let replies = [(true, draw.offensive_replies, draw.offensive_hits), (false, draw.benign_replies, draw.benign_hits)];
        for (offensive, n, hits) in replies {
            for k in 0..n {
                let id = next_id();
                let t = when(&mut rng);
                let r = rng.random_range(0..REPLIERS);
                out.repliers.push(r);
                let replier = replier_account(cfg.start_time, r);
                let tx = text(&mut rng, None);
                out.events.push(replier.event(id.clone(), t, EventKind::Reply, tx, Some(ego.id.clone())));
                let s = score(&mut rng, k < hits);
                out.scores.push((id.clone(), OFFENSIVE.to_owned(), s));
                out.truth.push(TruthEvent {
                    event_id: id,
                    user_id: replier.id,
                    identity: None,
                    offensive,
                });
            }
        }
    }

    for e in &user.edges {
        let id = next_id();
        let alter = alter_id(e.pool, e.alter);
        out.alters.push((e.pool, e.alter));
        let tx = text(&mut rng, None);
        if e.outgoing {
            out.events.push(ego.event(id, e.timestamp, EventKind::Retweet, tx, Some(alter)));
        } else {
            let acc = alter_account(shared, e.pool, e.alter);
            out.events.push(acc.event(id, e.timestamp, EventKind::Retweet, tx, Some(ego.id.clone())));
        }
    }
    out
}

/// Assign identity scores to one window's own tweets: exactly `identity_hits`
/// true items and `false_hits` other items score above 0.5.
fn score_identities<R: Rng>(
    rng: &mut R,
    shared: &Shared<'_>,
    draw: &PeriodDraw,
    tweets: &[(String, Option<usize>)],
    scores: &mut Vec<(String, String, f64)>,
) {
    for (a, name) in shared.score_names.iter().enumerate() {
        let (mine, rest): (Vec<&String>, Vec<&String>) = {
            let mut mine = Vec::new();
            let mut rest = Vec::new();
            for (id, about) in tweets {
                if *about == Some(a) {
                    mine.push(id);
                } else {
                    rest.push(id);
                }
            }
            (mine, rest)
        };
        for (k, id) in mine.iter().enumerate() {
            let s = score(rng, (k as u64) < draw.identity_hits[a]);
            scores.push(((*id).clone(), name.clone(), s));
        }
        let hits: BTreeSet<usize> = sample(rng, rest.len(), draw.false_hits[a] as usize).into_iter().collect();
        for (k, id) in rest.iter().enumerate() {
            let s = score(rng, hits.contains(&k));
            scores.push(((*id).clone(), name.clone(), s));
        }
    }
}

fn alter_bio(shared: &Shared<'_>, pool: Option<usize>, k: usize) -> String {
    let filler = FILLER_BIOS[k % FILLER_BIOS.len()];
    match pool {
        Some(i) => {
            let ex = &shared.examples[i];
            format!("{filler} | {}", ex[k % ex.len()])
        }
        None => filler.to_owned(),
    }
}

fn alter_account(shared: &Shared<'_>, pool: Option<usize>, k: usize) -> Account {
    let bio = alter_bio(shared, pool, k);
    Account {
        id: alter_id(pool, k),
        bio_pre: bio.clone(),
        bio_post: bio,
        change_time: i64::MIN,
        friends: 200,
        followers: 200,
        posts: 2000,
        created: shared.cohort.config.start_time - 400 * SECONDS_PER_DAY,
    }
}

fn replier_account(start_time: i64, r: usize) -> Account {
    let bio = FILLER_BIOS[r % FILLER_BIOS.len()].to_owned();
    Account {
        id: replier_id(r),
        bio_pre: bio.clone(),
        bio_post: bio,
        change_time: i64::MIN,
        friends: 100,
        followers: 100,
        posts: 1000,
        created: start_time - 400 * SECONDS_PER_DAY,
    }
}

/// Turn a cohort into the event stream, score table and ground truth that the
/// pipeline reads. Output is identical under any thread count.
pub fn materialize(cohort: &Cohort) -> Result<Materialized> {
    let cfg = &cohort.config;
    let taxonomy = Taxonomy::bundled();
    let matcher = Matcher::compile(&taxonomy)?;
    let examples: Vec<Vec<String>> = cohort
        .identities
        .iter()
        .map(|id| usable_examples(&matcher, &taxonomy, id))
        .collect::<Result<_>>()?;
    let shared = Shared {
        cohort,
        examples: &examples,
        score_names: cohort.identities.iter().map(IdentityId::score_name).collect(),
    };
    let outputs: Vec<UserOutput> = cohort
        .users
        .par_iter()
        .map(|u| {
            let index: u64 = u.user_id[1..].parse().expect("generated user ids are numeric");
            materialize_user(&shared, index, u)
        })
        .collect();

    let mut events = Vec::new();
    let mut scores = ScoreTable::new();
    let mut truth_events = Vec::new();
    let mut alters = BTreeSet::new();
    let mut repliers = BTreeSet::new();
    for o in outputs {
        events.extend(o.events);
        for (e, n, v) in o.scores {
            scores.insert(e, n, v)?;
        }
        truth_events.extend(o.truth);
        alters.extend(o.alters);
        repliers.extend(o.repliers);
    }

    // Every referenced alter and replier posts one profile tweet. Alters post
    // mid-span, inside every ego's twelve-week labeling window.
    let mid = cfg.start_time + cfg.weeks_span * SECONDS_PER_WEEK / 2;
    for (pool, k) in alters {
        let acc = alter_account(&shared, pool, k);
        events.push(acc.event(format!("{}-p", acc.id), mid, EventKind::Tweet, "hello".into(), None));
    }
    for r in repliers {
        let acc = replier_account(cfg.start_time, r);
        events.push(acc.event(format!("{}-p", acc.id), mid, EventKind::Tweet, "hello".into(), None));
    }
    events.sort_by(|a, b| (a.timestamp, &a.event_id).cmp(&(b.timestamp, &b.event_id)));
    // Every event gets a truth row; only tweets and received replies carry flags.
    let mut flagged: HashMap<String, TruthEvent> = truth_events.into_iter().map(|t| (t.event_id.clone(), t)).collect();
    let mut truth_events: Vec<TruthEvent> = events
        .iter()
        .map(|e| {
            flagged.remove(&e.event_id).unwrap_or_else(|| TruthEvent {
                event_id: e.event_id.clone(),
                user_id: e.user_id.clone(),
                identity: None,
                offensive: false,
            })
        })
        .collect();
    truth_events.sort_by(|a, b| a.event_id.cmp(&b.event_id));

    let homophily_log_ratio = cfg.network.as_ref().map(|n| (n.h_treated / n.h_control).ln());
    let truth = GroundTruth {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        outcome: cfg.outcome.clone(),
        alpha: cfg.alpha,
        beta: cfg.beta,
        effects: cohort
            .identities
            .iter()
            .enumerate()
            .map(|(i, id)| TruthEffect {
                identity: id.to_string(),
                b4: cfg.b4(i),
            })
            .collect(),
        homophily_log_ratio,
        users: cohort
            .users
            .iter()
            .map(|u| TruthUser {
                user_id: u.user_id.clone(),
                identity: u.treated_identity.map(|a| cohort.identities[a].to_string()),
                change_time: u.change_time,
                confounder: u.confounder,
                expected_pre: u.expected[0],
                expected_post: u.expected[1],
            })
            .collect(),
        events: truth_events,
    };
    Ok(Materialized { events, scores, truth })
}

/// Files written by [`write_materialized`], relative to the output directory.
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SCORES_FILE: &str = "scores.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const TRUTH_USERS_FILE: &str = "truth_users.csv";
pub const TRUTH_EVENTS_FILE: &str = "truth_events.csv";
pub const SCENARIO_FILE: &str = "scenario.toml";

/// Write events, scores, ground truth and the scenario into `dir`, returning
/// the paths written.
pub fn write_materialized(dir: &Path, cohort: &Cohort, m: &Materialized) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let path = |name: &str| dir.join(name);

    let mut w = BufWriter::new(File::create(path(EVENTS_FILE))?);
    write_events(&mut w, &m.events)?;
    std::io::Write::flush(&mut w)?;

    write_scores(BufWriter::new(File::create(path(SCORES_FILE))?), &m.scores)?;

    let json = serde_json::to_string_pretty(&m.truth).map_err(std::io::Error::from)?;
    std::fs::write(path(TRUTH_FILE), json + "\n")?;

    let mut w = csvio::create(&path(TRUTH_USERS_FILE), &TRUTH_USER_HEADER)?;
    for u in &m.truth.users {
        w.write_record([
            u.user_id.as_str(),
            u.identity.as_deref().unwrap_or(""),
            &u.change_time.to_string(),
            &u.confounder.to_string(),
            &u.expected_pre.to_string(),
            &u.expected_post.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csvio::create(&path(TRUTH_EVENTS_FILE), &TRUTH_EVENT_HEADER)?;
    for e in &m.truth.events {
        w.write_record([
            e.event_id.as_str(),
            e.user_id.as_str(),
            e.identity.as_deref().unwrap_or(""),
            if e.offensive { "1" } else { "0" },
        ])?;
    }
    w.flush()?;

    std::fs::write(path(SCENARIO_FILE), cohort.config.to_toml())?;
    Ok([EVENTS_FILE, SCORES_FILE, TRUTH_FILE, TRUTH_USERS_FILE, TRUTH_EVENTS_FILE, SCENARIO_FILE]
        .iter()
        .map(|n| path(n))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity_rules::{bundled_matcher, classify_user, CohortStatus, ObservationWindow};
    use crate::ingest::{build_timelines, parse_events, EventIndex};
    use crate::matching::extract_covariates;
    use crate::panel::{read_scores, OutcomeContext, OutcomeKind, PanelConfig};
    use crate::synthcohort::{generate_cohort, SynthConfig, BUNDLED_SCENARIOS};

    fn e2e() -> (Cohort, Materialized) {
        let cohort = generate_cohort(&SynthConfig::bundled("e2e").unwrap()).unwrap();
        let m = materialize(&cohort).unwrap();
        (cohort, m)
    }

    #[test]
    fn fillers_are_label_free_and_examples_usable() {
        let matcher = bundled_matcher();
        for f in FILLER_BIOS {
            assert!(matcher.label(f).is_empty(), "{f}");
        }
        let taxonomy = Taxonomy::bundled();
        for name in BUNDLED_SCENARIOS {
            let cfg = SynthConfig::bundled(name).unwrap();
            for id in cfg.identity_ids().unwrap() {
                assert!(!usable_examples(matcher, &taxonomy, &id).unwrap().is_empty(), "{id}");
            }
        }
    }

    #[test]
    fn strict_round_trip_and_determinism() {
        let (cohort, m) = e2e();
        let mut buf = Vec::new();
        write_events(&mut buf, &m.events).unwrap();
        let parsed = parse_events(buf.as_slice(), true).unwrap();
        assert_eq!(parsed.skipped, 0);
        assert_eq!(parsed.events, m.events);
        let mut s = Vec::new();
        write_scores(&mut s, &m.scores).unwrap();
        assert_eq!(read_scores(s.as_slice(), "scores").unwrap(), m.scores);

        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let again = pool.install(|| materialize(&cohort).unwrap());
        let mut buf2 = Vec::new();
        write_events(&mut buf2, &again.events).unwrap();
        assert!(buf == buf2);
        assert_eq!(again.scores, m.scores);
        assert_eq!(again.truth, m.truth);
        assert_eq!(m.truth.events.len(), m.events.len());
    }

    #[test]
    fn score_exceedance_matches_mixture() {
        let (cohort, m) = e2e();
        let sc = cohort.config.scores;
        let (mut id_n, mut id_hi, mut off_n, mut off_hi) = (0.0, 0.0, 0.0, 0.0);
        for t in &m.truth.events {
            if let Some(name) = &t.identity {
                let id: IdentityId = name.parse().unwrap();
                id_n += 1.0;
                id_hi += f64::from(u8::from(m.scores.get(&t.event_id, &id.score_name()).unwrap() > 0.5));
            }
            if t.offensive {
                off_n += 1.0;
                off_hi += f64::from(u8::from(m.scores.get(&t.event_id, OFFENSIVE).unwrap() > 0.5));
            }
        }
        assert!(id_n > 1000.0 && off_n > 300.0);
        assert!((id_hi / id_n - sc.identity_exceed).abs() < 0.01, "{}", id_hi / id_n);
        assert!((off_hi / off_n - sc.offensive_exceed).abs() < 0.02, "{}", off_hi / off_n);
    }

    /// The pipeline stages, run on the emitted events, see exactly the cohort
    /// the generator drew.
    #[test]
    fn events_reproduce_cohort() {
        let (cohort, m) = e2e();
        let matcher = bundled_matcher();
        let timelines = build_timelines(&m.events);
        let index = EventIndex::new(&m.events);
        for (a, identity) in cohort.identities.iter().enumerate() {
            let ctx = OutcomeContext {
                index: &index,
                scores: &m.scores,
                matcher,
                identity,
                config: PanelConfig::default(),
            };
            for u in &cohort.users {
                let status = classify_user(matcher, &timelines.by_user[&u.user_id], identity, ObservationWindow::UNBOUNDED);
                match (u.treated_identity, &status) {
                    (Some(t), CohortStatus::IdentityAdded { change_time, .. }) if t == a => {
                        assert_eq!(*change_time, u.change_time)
                    }
                    (None, CohortStatus::NotAdded { change_time }) => assert_eq!(*change_time, u.change_time),
                    (Some(t), CohortStatus::Excluded { .. }) if t != a => {}
                    other => panic!("{}: {other:?}", u.user_id),
                }
                let cov = extract_covariates(index.authored_by(&u.user_id), u.change_time).unwrap();
                assert_eq!(cov, u.covariates, "{}", u.user_id);
                for kind in [
                    OutcomeKind::IdentityTweets,
                    OutcomeKind::TotalTweets,
                    OutcomeKind::TotalRetweets,
                    OutcomeKind::OffensiveReplies,
                ] {
                    let from_events = ctx.outcome(&u.user_id, u.change_time, kind).unwrap();
                    assert_eq!(from_events, cohort.outcome(u, a, kind).unwrap(), "{} {kind}", u.user_id);
                }
            }
        }
        for id in timelines.by_user.keys().filter(|k| !k.starts_with('u')) {
            assert_eq!(timelines.by_user[id].snapshots.len(), 1, "{id}");
        }
    }

    #[test]
    fn ego_networks_follow_edges() {
        let mut cfg = SynthConfig::bundled("network").unwrap();
        cfg.n_treated = 60;
        cfg.n_control_pool = 120;
        let cohort = generate_cohort(&cfg).unwrap();
        let m = materialize(&cohort).unwrap();
        let index = EventIndex::new(&m.events);
        let identity = &cohort.identities[0];
        let ctx = OutcomeContext {
            index: &index,
            scores: &m.scores,
            matcher: bundled_matcher(),
            identity,
            config: PanelConfig::default(),
        };
        for u in &cohort.users {
            let distinct = |outgoing: bool, post: bool, same: bool| -> u64 {
                let set: BTreeSet<(Option<usize>, usize)> = u
                    .edges
                    .iter()
                    .filter(|e| e.outgoing == outgoing && (e.timestamp > u.change_time) == post)
                    .filter(|e| !same || e.pool == Some(0))
                    .map(|e| (e.pool, e.alter))
                    .collect();
                set.len() as u64
            };
            let check = |kind, outgoing, same| {
                let o = ctx.outcome(&u.user_id, u.change_time, kind).unwrap();
                assert_eq!((o.y_pre, o.y_post), (distinct(outgoing, false, same), distinct(outgoing, true, same)));
            };
            check(OutcomeKind::OutDegree, true, false);
            check(OutcomeKind::InDegree, false, false);
            check(OutcomeKind::SameIdentityOutDegree, true, true);
            check(OutcomeKind::SameIdentityInDegree, false, true);
        }
    }

    #[test]
    fn writes_every_file() {
        let mut cfg = SynthConfig::bundled("null").unwrap();
        cfg.n_treated = 20;
        cfg.n_control_pool = 40;
        let cohort = generate_cohort(&cfg).unwrap();
        let m = materialize(&cohort).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_materialized(dir.path(), &cohort, &m).unwrap();
        assert_eq!(paths.len(), 6);
        let truth: GroundTruth = serde_json::from_str(&std::fs::read_to_string(dir.path().join(TRUTH_FILE)).unwrap()).unwrap();
        assert_eq!(truth.effects, m.truth.effects);
        let back = SynthConfig::from_path(&dir.path().join(SCENARIO_FILE)).unwrap();
        assert_eq!(back, cfg);
        let parsed = crate::ingest::read_events_path(&dir.path().join(EVENTS_FILE), true).unwrap();
        assert_eq!(parsed.events.len(), m.events.len());
    }
}
