use std::collections::{BTreeMap, BTreeSet};

use crate::identity_rules::{IdentityId, Matcher};
use crate::ingest::{ActivityEvent, EventIndex, EventKind};
use crate::time::SECONDS_PER_WEEK;

use super::outcomes::{period_of, Period};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoConfig {
    pub weeks: i64,
    /// Treat quote tweets as retweets when building edges.
    pub quotes_as_retweets: bool,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self {
            weeks: 12,
            quotes_as_retweets: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub alter: String,
    pub kind: EventKind,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EgoGraph {
    pub ego: String,
    pub out_edges: BTreeSet<Edge>,
    pub in_edges: BTreeSet<Edge>,
    pub alter_labels: BTreeMap<String, BTreeSet<IdentityId>>,
}

fn distinct(edges: &BTreeSet<Edge>) -> BTreeSet<&str> {
    edges.iter().map(|e| e.alter.as_str()).collect()
}

impl EgoGraph {
    pub fn out_degree(&self) -> usize {
        distinct(&self.out_edges).len()
    }

    pub fn in_degree(&self) -> usize {
        distinct(&self.in_edges).len()
    }

    fn same(&self, edges: &BTreeSet<Edge>, identity: &IdentityId) -> usize {
        distinct(edges)
            .into_iter()
            .filter(|a| self.alter_labels.get(*a).is_some_and(|l| l.contains(identity)))
            .count()
    }

    pub fn same_identity_out_degree(&self, identity: &IdentityId) -> usize {
        self.same(&self.out_edges, identity)
    }

    pub fn same_identity_in_degree(&self, identity: &IdentityId) -> usize {
        self.same(&self.in_edges, identity)
    }
}

fn is_edge(kind: EventKind, quotes: bool) -> bool {
    match kind {
        EventKind::Reply | EventKind::Retweet => true,
        EventKind::Quote => quotes,
        EventKind::Tweet => false,
    }
}

/// Interaction graphs of `ego` for the weeks before and after `change_time`.
///
/// Alters are labeled from every profile snapshot of theirs seen anywhere in the
/// combined span, so an alter that discloses the identity at any point counts
/// as same-identity in both periods.
pub fn build_ego_network(
    index: &EventIndex<'_>,
    matcher: &Matcher,
    ego: &str,
    change_time: i64,
    cfg: EgoConfig,
) -> (EgoGraph, EgoGraph) {
    let window = cfg.weeks * SECONDS_PER_WEEK;
    let mut pre = EgoGraph {
        ego: ego.to_owned(),
        ..Default::default()
    };
    let mut post = pre.clone();
    let mut place = |alter: &str, e: &ActivityEvent, outgoing: bool| {
        if alter == ego {
            return;
        }
        let Some(period) = period_of(e.timestamp, change_time, window) else {
            return;
        };
        let g = match period {
            Period::Pre => &mut pre,
            Period::Post => &mut post,
        };
        let edge = Edge {
            alter: alter.to_owned(),
            kind: if e.kind == EventKind::Quote { EventKind::Retweet } else { e.kind },
            timestamp: e.timestamp,
        };
        if outgoing {
            g.out_edges.insert(edge);
        } else {
            g.in_edges.insert(edge);
        }
    };
    for e in index.authored_by(ego) {
        if let (true, Some(alter)) = (is_edge(e.kind, cfg.quotes_as_retweets), e.target_user_id.as_deref()) {
            place(alter, e, true);
        }
    }
    for e in index.targeting(ego) {
        if is_edge(e.kind, cfg.quotes_as_retweets) {
            place(&e.user_id, e, false);
        }
    }

    let alters: BTreeSet<String> = [&pre, &post]
        .iter()
        .flat_map(|g| g.out_edges.iter().chain(&g.in_edges).map(|e| e.alter.clone()))
        .collect();
    let (lo, hi) = (change_time - window, change_time + window);
    let mut labels = BTreeMap::new();
    for alter in alters {
        let profiles: BTreeSet<&str> = index
            .authored_by(&alter)
            .iter()
            .filter(|e| e.timestamp >= lo && e.timestamp <= hi)
            .map(|e| e.profile_text.as_str())
            .collect();
        let set: BTreeSet<IdentityId> = profiles
            .into_iter()
            .flat_map(|p| matcher.label(p).labels.into_iter().map(|l| l.identity))
            .collect();
        labels.insert(alter, set);
    }
    pre.alter_labels = labels.clone();
    post.alter_labels = labels;
    (pre, post)
}
