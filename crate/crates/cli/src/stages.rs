//! One function per pipeline stage. Each reads the previous stage's files,
//! writes its own and returns the row counts recorded in the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use disclosure_core::distances::{read_styles, read_topics, shift_report, write_shift, GroupInputs};
use disclosure_core::estimation::{run_experiment, write_effects, ModelSpec};
use disclosure_core::identity_rules::{
    classify_all, compile_taxonomy, read_cohort, write_cohort, CohortStatus, ObservationWindow,
};
use disclosure_core::ingest::{
    build_timelines, filter_users, read_events_path, read_timelines, write_timelines, EventIndex, FilterPolicy,
    ParsedEvents,
};
use disclosure_core::matching::{
    extract_covariates, match_cohort, read_covariates, read_matches, write_balance, write_covariates, write_matches,
    CovariateRow,
};
use disclosure_core::panel::{
    assemble_panel, read_panel, read_scores, write_panel, CountConfig, EgoConfig, OutcomeContext, PanelConfig,
    PanelObservation, ScoreTable,
};
use disclosure_core::synthcohort::{STYLES_FILE, TOPICS_FILE};
use disclosure_core::{ActivityEvent, Error as CoreError, IdentityId, Matcher, OutcomeKind, Taxonomy};
use rayon::prelude::*;

use crate::error::{io_context, CliError, ErrorKind, Result};

pub type Counts = BTreeMap<String, u64>;

fn counts<const N: usize>(pairs: [(&str, usize); N]) -> Counts {
    pairs.into_iter().map(|(k, v)| (k.to_owned(), v as u64)).collect()
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        io_context(std::fs::create_dir_all(dir), dir)?;
    }
    Ok(BufWriter::new(io_context(File::create(path), path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(io_context(File::open(path), path)?))
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

/// File-name form of an identity, e.g. `gender_women`.
pub fn slug(identity: &IdentityId) -> String {
    identity.to_string().replace(':', "_")
}

pub fn load_matcher(taxonomy: Option<&Path>) -> Result<Matcher> {
    Ok(match taxonomy {
        Some(p) => compile_taxonomy(p)?,
        None => Matcher::compile(&Taxonomy::bundled())?,
    })
}

pub fn load_events(path: &Path, strict: bool) -> Result<ParsedEvents> {
    read_events_path(path, strict).map_err(|e| CliError::from(e).at_path(path))
}

pub fn load_scores(path: &Path) -> Result<ScoreTable> {
    Ok(read_scores(open(path)?, &name(path))?)
}

impl CliError {
    fn at_path(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

/// Rebuild timelines and keep users passing the language and verified filters.
pub fn ingest(parsed: &ParsedEvents, policy: &FilterPolicy, out: &Path) -> Result<Counts> {
    let timelines = build_timelines(&parsed.events);
    let keep = filter_users(&timelines, &parsed.events, policy);
    let mut w = create(out)?;
    write_timelines(&mut w, &timelines, Some(&keep))?;
    w.flush()?;
    Ok(counts([
        ("events", parsed.events.len()),
        ("skipped_records", parsed.skipped),
        ("users", timelines.by_user.len()),
        ("users_kept", keep.len()),
    ]))
}

/// Classify every kept user with respect to `identity`.
pub fn label(matcher: &Matcher, timelines: &Path, identity: &IdentityId, window: ObservationWindow, out: &Path) -> Result<Counts> {
    let tl = read_timelines(open(timelines)?, &name(timelines))?;
    let rows = classify_all(matcher, &tl, identity, window, None);
    let mut w = create(out)?;
    write_cohort(&mut w, &rows)?;
    w.flush()?;
    let mut by: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *by.entry(r.status.name()).or_default() += 1;
    }
    let mut c = counts([("users", rows.len())]);
    for status in ["identity_added", "not_added", "always_positive", "always_negative", "excluded"] {
        c.insert(status.to_owned(), by.get(status).copied().unwrap_or(0) as u64);
    }
    Ok(c)
}

/// Covariates at the change date of every treated user and control candidate.
pub fn cohort(cohort: &Path, events: &[ActivityEvent], out: &Path) -> Result<Counts> {
    let rows = read_cohort(open(cohort)?, &name(cohort))?;
    let index = EventIndex::new(events);
    let candidates: Vec<(&str, i64)> = rows
        .iter()
        .filter(|r| r.status.is_treated() || r.status.is_control_candidate())
        .filter_map(|r| r.status.change_time().map(|t| (r.user_id.as_str(), t)))
        .collect();
    let covariates: Vec<CovariateRow> = candidates
        .iter()
        .filter_map(|(user, t)| {
            extract_covariates(index.authored_by(user), *t).map(|covariates| CovariateRow {
                user_id: (*user).to_owned(),
                change_time: *t,
                covariates,
            })
        })
        .collect();
    let mut w = create(out)?;
    write_covariates(&mut w, &covariates)?;
    w.flush()?;
    let treated = rows.iter().filter(|r| r.status.is_treated()).count();
    Ok(counts([
        ("treated", treated),
        ("control_candidates", candidates.len() - treated),
        ("with_covariates", covariates.len()),
    ]))
}

/// Propensity matching of treated users to control candidates.
pub fn match_stage(cohort: &Path, covariates: &Path, matches_out: &Path, balance_out: &Path) -> Result<Counts> {
    let rows = read_cohort(open(cohort)?, &name(cohort))?;
    let cov = read_covariates(open(covariates)?, &name(covariates))?;
    let status: BTreeMap<&str, &CohortStatus> = rows.iter().map(|r| (r.user_id.as_str(), &r.status)).collect();
    let (treated, controls): (Vec<CovariateRow>, Vec<CovariateRow>) = cov
        .into_iter()
        .filter(|r| status.get(r.user_id.as_str()).is_some_and(|s| s.is_treated() || s.is_control_candidate()))
        .partition(|r| status[r.user_id.as_str()].is_treated());
    if treated.is_empty() {
        return Err(CliError::data(format!("{}: no treated users to match", name(cohort))));
    }
    if controls.is_empty() {
        return Err(CliError::data(format!("{}: no control candidates", name(cohort))));
    }
    let report = match_cohort(&treated, &controls)?;
    let mut w = create(matches_out)?;
    write_matches(&mut w, &report.outcome)?;
    w.flush()?;
    let mut w = create(balance_out)?;
    write_balance(&mut w, &report.balance)?;
    w.flush()?;
    let balanced = report.balance.rows.iter().filter(|r| r.pass).count();
    Ok(counts([
        ("treated", treated.len()),
        ("control_candidates", controls.len()),
        ("matched_treated", report.outcome.matches.len()),
        ("unmatched_treated", report.outcome.unmatched.len()),
        ("matched_controls", report.outcome.unique_controls().len()),
        ("strata", report.outcome.strata.len()),
        ("covariates_balanced", balanced),
    ]))
}

pub struct PanelInputs<'a> {
    pub events: &'a [ActivityEvent],
    pub scores: &'a ScoreTable,
    pub matcher: &'a Matcher,
    pub config: PanelConfig,
}

pub fn panel_config(window_days: i64, threshold: f64, ego_weeks: i64, quotes_as_retweets: bool) -> Result<PanelConfig> {
    if window_days <= 0 || ego_weeks <= 0 || !(0.0..1.0).contains(&threshold) {
        return Err(CliError::config("panel windows must be positive and the threshold in [0, 1)"));
    }
    Ok(PanelConfig {
        counts: CountConfig { window_days, threshold },
        ego: EgoConfig {
            weeks: ego_weeks,
            quotes_as_retweets,
        },
    })
}

/// Pre/post outcome rows of the matched users of one identity, one block per outcome.
pub fn panel(
    inputs: &PanelInputs<'_>,
    identity: &IdentityId,
    outcomes: &[OutcomeKind],
    matches: &Path,
    covariates: &Path,
    out: &Path,
) -> Result<Vec<(OutcomeKind, Counts)>> {
    let (sets, unmatched) = read_matches(open(matches)?, &name(matches))?;
    let cov_rows = read_covariates(open(covariates)?, &name(covariates))?;
    let change: BTreeMap<&str, i64> = cov_rows.iter().map(|r| (r.user_id.as_str(), r.change_time)).collect();
    let cov = cov_rows.iter().map(|r| (r.user_id.clone(), r.covariates)).collect();
    let users: BTreeSet<&str> = sets
        .iter()
        .flat_map(|m| std::iter::once(m.treated_id.as_str()).chain(m.control_ids.iter().map(String::as_str)))
        .collect();
    let index = EventIndex::new(inputs.events);
    let ctx = OutcomeContext {
        index: &index,
        scores: inputs.scores,
        matcher: inputs.matcher,
        identity,
        config: inputs.config,
    };
    let ident = identity.to_string();
    let mut rows: Vec<PanelObservation> = Vec::new();
    let mut report = Vec::new();
    for &kind in outcomes {
        let computed: Vec<(String, _)> = users
            .par_iter()
            .filter_map(|u| change.get(u).map(|t| (*u, *t)))
            .map(|(u, t)| ctx.outcome(u, t, kind).map(|o| (u.to_owned(), o)))
            .collect::<std::result::Result<_, CoreError>>()?;
        let per_user = computed.into_iter().collect();
        let (block, r) = assemble_panel(&ident, kind, &sets, &per_user, &cov);
        let matched_controls: BTreeSet<&str> = sets.iter().flat_map(|m| m.control_ids.iter().map(String::as_str)).collect();
        report.push((
            kind,
            counts([
                ("matched_treated", sets.len()),
                ("unmatched_treated", unmatched.len()),
                ("matched_controls", matched_controls.len()),
                ("treated_in_panel", r.treated_users),
                ("controls_in_panel", r.control_users),
                ("flagged", r.flagged.len()),
                ("missing", r.missing.len()),
                ("rows", block.len()),
            ]),
        ));
        rows.extend(block);
    }
    let mut w = create(out)?;
    write_panel(&mut w, &rows)?;
    w.flush()?;
    Ok(report)
}

pub fn model_spec(spec: &str, offset: bool) -> Result<ModelSpec> {
    Ok(ModelSpec::by_name(spec)?.with_offset(offset))
}

/// Fit every (identity, outcome) panel and Holm-correct across identities.
pub fn estimate(panels: &[PathBuf], spec: &ModelSpec, alpha: f64, out: &Path) -> Result<Counts> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut rows = Vec::new();
    for p in panels {
        rows.extend(read_panel(open(p)?, &name(p))?);
    }
    let exp = run_experiment(&rows, spec, alpha);
    let mut w = create(out)?;
    write_effects(&mut w, &exp.reports)?;
    w.flush()?;
    let attempted = exp.fits.len() + exp.failures.len();
    if let Some(f) = exp.failures.first() {
        let kind = if exp.failures.iter().any(|f| matches!(f.error, CoreError::NonConvergence { .. })) {
            ErrorKind::Estimation
        } else {
            ErrorKind::Data
        };
        return Err(CliError {
            kind,
            stage: None,
            message: format!(
                "{} of {attempted} fits failed, first {} / {}: {}",
                exp.failures.len(),
                f.identity,
                f.outcome,
                f.error
            ),
        });
    }
    Ok(counts([
        ("fits_attempted", attempted),
        ("fits_converged", exp.fits.iter().filter(|(_, _, f)| f.converged).count()),
        ("fits_fallback", exp.fallbacks()),
        ("effects", exp.reports.len()),
        ("significant", exp.reports.iter().filter(|r| r.significant).count()),
    ]))
}

pub fn read_group(dir: &Path) -> Result<GroupInputs> {
    let t = dir.join(TOPICS_FILE);
    let s = dir.join(STYLES_FILE);
    Ok(GroupInputs {
        topics: read_topics(open(&t)?, &name(&t))?,
        styles: read_styles(open(&s)?, &name(&s))?,
    })
}

/// Topic and style distance of the pre and post groups from the reference.
pub fn distances(ap: &Path, pre: &Path, post: &Path, out: &Path) -> Result<Counts> {
    let (a, b, c) = (read_group(ap)?, read_group(pre)?, read_group(post)?);
    let report = shift_report(&a, &b, &c)?;
    let mut w = create(out)?;
    write_shift(&mut w, &report)?;
    w.flush()?;
    Ok(counts([
        ("ap_items", a.topics.len()),
        ("pre_items", b.topics.len()),
        ("post_items", c.topics.len()),
    ]))
}
