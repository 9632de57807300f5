use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::csvio;
use crate::error::{Error, Result};
use crate::matching::{CovariateVector, MatchSet};

use super::outcomes::OutcomeKind;

/// Time-invariant controls carried on every panel row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Controls {
    pub n_friends: f64,
    pub n_followers: f64,
    pub n_posts_total: f64,
}

impl From<&CovariateVector> for Controls {
    fn from(c: &CovariateVector) -> Self {
        Self {
            n_friends: c.n_friends,
            n_followers: c.n_followers,
            n_posts_total: c.n_posts_total,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelObservation {
    pub identity: String,
    pub outcome: OutcomeKind,
    pub user_id: String,
    pub treated: bool,
    pub post: bool,
    pub y: u64,
    pub exposure: Option<u64>,
    pub n_id: Option<u64>,
    pub controls: Controls,
    /// Matching weight: 1 for treated users and unmatched analyses.
    pub weight: f64,
}

/// Per-user outcome tuple for one outcome kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UserOutcome {
    pub y_pre: u64,
    pub y_post: u64,
    pub exposure: Option<(u64, u64)>,
    pub n_id: Option<(u64, u64)>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanelReport {
    pub treated_users: usize,
    pub control_users: usize,
    /// Users excluded because their outcome could not be scored.
    pub flagged: Vec<String>,
    /// Users excluded because covariates or outcomes are missing.
    pub missing: Vec<String>,
}

fn usable(user: &str, outcomes: &BTreeMap<String, UserOutcome>, covariates: &BTreeMap<String, CovariateVector>) -> bool {
    covariates.contains_key(user) && outcomes.get(user).is_some_and(|o| !o.flagged)
}

/// Matching weight of every control: the sum over the match sets that use it
/// of one over the number of usable controls in the set. Sets whose treated
/// user is unusable contribute nothing, so weights sum to the number of
/// matched treated users that keep at least one control.
pub fn control_weights<'a>(
    matches: &'a [MatchSet],
    outcomes: &BTreeMap<String, UserOutcome>,
    covariates: &BTreeMap<String, CovariateVector>,
) -> BTreeMap<&'a str, f64> {
    let mut weights = BTreeMap::new();
    for m in matches.iter().filter(|m| usable(&m.treated_id, outcomes, covariates)) {
        let kept: Vec<&str> = m
            .control_ids
            .iter()
            .map(String::as_str)
            .filter(|c| usable(c, outcomes, covariates))
            .collect();
        for c in &kept {
            *weights.entry(*c).or_insert(0.0) += 1.0 / kept.len() as f64;
        }
    }
    // Controls whose rows are dropped still appear so the report lists them.
    for m in matches {
        for c in &m.control_ids {
            weights.entry(c.as_str()).or_insert(0.0);
        }
    }
    weights
}

/// Two rows (pre, post) per matched treated user and per distinct matched
/// control, controls weighted by [`control_weights`].
pub fn assemble_panel(
    identity: &str,
    kind: OutcomeKind,
    matches: &[MatchSet],
    outcomes: &BTreeMap<String, UserOutcome>,
    covariates: &BTreeMap<String, CovariateVector>,
) -> (Vec<PanelObservation>, PanelReport) {
    let treated: BTreeSet<&str> = matches.iter().map(|m| m.treated_id.as_str()).collect();
    let mut controls = control_weights(matches, outcomes, covariates);
    controls.retain(|c, _| !treated.contains(c));
    assemble_groups(identity, kind, &treated, &controls, outcomes, covariates)
}

/// Panel over explicit treated and weighted control sets. Treated rows have
/// weight 1; controls with weight 0 are reported as missing.
pub fn assemble_groups(
    identity: &str,
    kind: OutcomeKind,
    treated: &BTreeSet<&str>,
    controls: &BTreeMap<&str, f64>,
    outcomes: &BTreeMap<String, UserOutcome>,
    covariates: &BTreeMap<String, CovariateVector>,
) -> (Vec<PanelObservation>, PanelReport) {
    let mut rows = Vec::new();
    let mut report = PanelReport::default();
    let users = treated
        .iter()
        .map(|u| (*u, true, 1.0))
        .chain(controls.iter().map(|(u, w)| (*u, false, *w)));
    for (user, is_treated, weight) in users {
        let (Some(o), Some(cov)) = (outcomes.get(user), covariates.get(user)) else {
            report.missing.push(user.to_owned());
            continue;
        };
        if o.flagged {
            report.flagged.push(user.to_owned());
            continue;
        }
        if weight <= 0.0 {
            report.missing.push(user.to_owned());
            continue;
        }
        if is_treated {
            report.treated_users += 1;
        } else {
            report.control_users += 1;
        }
        for (post, y) in [(false, o.y_pre), (true, o.y_post)] {
            let pick = |pair: Option<(u64, u64)>| pair.map(|(a, b)| if post { b } else { a });
            rows.push(PanelObservation {
                identity: identity.to_owned(),
                outcome: kind,
                user_id: user.to_owned(),
                treated: is_treated,
                post,
                y,
                exposure: pick(o.exposure),
                n_id: pick(o.n_id),
                controls: cov.into(),
                weight,
            });
        }
    }
    (rows, report)
}

pub const PANEL_HEADER: [&str; 12] = [
    "identity",
    "outcome",
    "user_id",
    "treated",
    "post",
    "y",
    "exposure",
    "n_id",
    "n_friends",
    "n_followers",
    "n_posts_total",
    "weight",
];

fn opt(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_panel<W: Write>(out: W, rows: &[PanelObservation]) -> Result<()> {
    let mut w = csvio::writer(out, &PANEL_HEADER)?;
    for r in rows {
        w.write_record([
            r.identity.clone(),
            r.outcome.to_string(),
            r.user_id.clone(),
            u8::from(r.treated).to_string(),
            u8::from(r.post).to_string(),
            r.y.to_string(),
            opt(r.exposure),
            opt(r.n_id),
            r.controls.n_friends.to_string(),
            r.controls.n_followers.to_string(),
            r.controls.n_posts_total.to_string(),
            r.weight.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn flag(rec: &csv::StringRecord, i: usize, name: &str) -> Result<bool> {
    match rec.get(i).unwrap_or("") {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            line: rec.position().map_or(0, |p| p.line() as usize),
            field: name.into(),
            message: format!("expected 0 or 1, found `{other}`"),
        }),
    }
}

pub fn read_panel<R: Read>(input: R, name: &str) -> Result<Vec<PanelObservation>> {
    let mut rdr = csvio::reader(input, name, &PANEL_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = PanelObservation {
            identity: rec.get(0).unwrap_or("").to_owned(),
            outcome: csvio::parse_field(&rec, 1, "outcome")?,
            user_id: rec.get(2).unwrap_or("").to_owned(),
            treated: flag(&rec, 3, "treated")?,
            post: flag(&rec, 4, "post")?,
            y: csvio::parse_field(&rec, 5, "y")?,
            exposure: csvio::opt_field(&rec, 6, "exposure")?,
            n_id: csvio::opt_field(&rec, 7, "n_id")?,
            controls: Controls {
                n_friends: csvio::parse_field(&rec, 8, "n_friends")?,
                n_followers: csvio::parse_field(&rec, 9, "n_followers")?,
                n_posts_total: csvio::parse_field(&rec, 10, "n_posts_total")?,
            },
            weight: csvio::parse_field(&rec, 11, "weight")?,
        };
        if !(row.weight.is_finite() && row.weight > 0.0) {
            return Err(Error::invalid(format!("{name}: weight of `{}` must be positive", row.user_id)));
        }
        if row.exposure.is_some_and(|e| e < row.y) {
            return Err(Error::invalid(format!("{name}: exposure below count for `{}`", row.user_id)));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(t: &str, cs: &[&str]) -> MatchSet {
        MatchSet {
            treated_id: t.into(),
            control_ids: cs.iter().map(|c| c.to_string()).collect(),
            stratum_index: 0,
            week: 0,
            distances: vec![0.0; cs.len()],
        }
    }

    fn outcome(y: u64) -> UserOutcome {
        UserOutcome {
            y_pre: y,
            y_post: y + 1,
            exposure: Some((y + 2, y + 3)),
            n_id: None,
            flagged: false,
        }
    }

    #[test]
    fn rows_per_user() {
        let matches = vec![set("t", &["a", "b"])];
        let outcomes: BTreeMap<String, UserOutcome> =
            ["t", "a", "b"].iter().map(|u| (u.to_string(), outcome(1))).collect();
        let covs: BTreeMap<String, CovariateVector> =
            ["t", "a", "b"].iter().map(|u| (u.to_string(), CovariateVector::default())).collect();
        let (rows, report) = assemble_panel("gender:women", OutcomeKind::IdentityTweets, &matches, &outcomes, &covs);
        assert_eq!(rows.len(), 6);
        assert_eq!(rows.iter().filter(|r| r.treated).count(), 2);
        assert_eq!((report.treated_users, report.control_users), (1, 2));
        assert!(rows.iter().all(|r| r.weight == if r.treated { 1.0 } else { 0.5 }));

        let mut buf = Vec::new();
        write_panel(&mut buf, &rows).unwrap();
        assert_eq!(read_panel(buf.as_slice(), "p").unwrap(), rows);
    }

    #[test]
    fn flagged_and_missing_excluded() {
        let matches = vec![set("t", &["a", "b"]), set("u", &["a"])];
        let mut outcomes: BTreeMap<String, UserOutcome> =
            ["t", "a", "u"].iter().map(|u| (u.to_string(), outcome(0))).collect();
        outcomes.get_mut("u").unwrap().flagged = true;
        let covs: BTreeMap<String, CovariateVector> =
            ["t", "a", "b", "u"].iter().map(|u| (u.to_string(), CovariateVector::default())).collect();
        let (rows, report) = assemble_panel("x:y", OutcomeKind::TotalTweets, &matches, &outcomes, &covs);
        assert_eq!(rows.len(), 4);
        assert_eq!(report.flagged, vec!["u"]);
        assert_eq!(report.missing, vec!["b"]);
        assert!(rows.iter().all(|r| r.weight == 1.0));
    }

    #[test]
    fn reused_controls_accumulate_weight() {
        let matches = vec![set("t", &["a", "b"]), set("u", &["a"])];
        let users = ["t", "u", "a", "b"];
        let outcomes: BTreeMap<String, UserOutcome> = users.iter().map(|u| (u.to_string(), outcome(2))).collect();
        let covs: BTreeMap<String, CovariateVector> =
            users.iter().map(|u| (u.to_string(), CovariateVector::default())).collect();
        let w = control_weights(&matches, &outcomes, &covs);
        assert_eq!(w.into_iter().collect::<Vec<_>>(), vec![("a", 1.5), ("b", 0.5)]);
    }
}
