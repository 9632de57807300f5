//! The library stages chained through their on-disk formats reproduce the
//! analysis done directly on the generator's cohort.

use std::collections::BTreeMap;

use disclosure_core::estimation::{fit_nb_gee, percent_interval, spec_for, Term};
use disclosure_core::identity_rules::{classify_all, read_cohort, write_cohort, CohortRow, ObservationWindow};
use disclosure_core::ingest::{
    build_timelines, filter_users, parse_events, read_timelines, write_events, write_timelines, EventIndex, FilterPolicy,
};
use disclosure_core::matching::{
    extract_covariates, match_cohort, read_covariates, read_matches, write_covariates, write_matches, CovariateRow,
};
use disclosure_core::panel::{
    assemble_panel, read_panel, read_scores, write_panel, write_scores, OutcomeContext, PanelConfig,
};
use disclosure_core::synthcohort::{analyze_cohort, generate_cohort, materialize};
use disclosure_core::{Matcher, ModelSpec, OutcomeKind, SynthConfig, Taxonomy};

fn bytes(f: impl FnOnce(&mut Vec<u8>)) -> Vec<u8> {
    let mut v = Vec::new();
    f(&mut v);
    v
}

#[test]
fn files_reproduce_cohort_analysis() {
    let mut cfg = SynthConfig::bundled("confounded-effect").unwrap();
    cfg.n_treated = 300;
    cfg.n_control_pool = 1500;
    let cohort = generate_cohort(&cfg).unwrap();
    let m = materialize(&cohort).unwrap();
    let identity = &cohort.identities[0];
    let matcher = Matcher::compile(&Taxonomy::bundled()).unwrap();

    let raw = bytes(|w| write_events(w, &m.events).unwrap());
    let events = parse_events(&raw[..], true).unwrap();
    assert_eq!(events.skipped, 0);
    assert_eq!(events.events, m.events);
    let scores = read_scores(&bytes(|w| write_scores(w, &m.scores).unwrap())[..], "scores").unwrap();
    assert_eq!(scores.len(), m.scores.len());

    let built = build_timelines(&events.events);
    let keep = filter_users(&built, &events.events, &FilterPolicy::default());
    for u in &cohort.users {
        assert!(keep.contains(&u.user_id), "{}", u.user_id);
    }
    let timelines = read_timelines(&bytes(|w| write_timelines(w, &built, Some(&keep)).unwrap())[..], "tl").unwrap();

    let rows = classify_all(&matcher, &timelines, identity, ObservationWindow::UNBOUNDED, None);
    let rows: Vec<CohortRow> = read_cohort(&bytes(|w| write_cohort(w, &rows).unwrap())[..], "cohort").unwrap();
    let treated_ids: Vec<&str> = rows.iter().filter(|r| r.status.is_treated()).map(|r| r.user_id.as_str()).collect();
    let expected: Vec<&str> = cohort.treated(0).map(|u| u.user_id.as_str()).collect();
    assert_eq!(treated_ids, expected);

    let index = EventIndex::new(&events.events);
    let cov: Vec<CovariateRow> = rows
        .iter()
        .filter(|r| r.status.is_treated() || r.status.is_control_candidate())
        .filter_map(|r| {
            let t = r.status.change_time()?;
            extract_covariates(index.authored_by(&r.user_id), t).map(|covariates| CovariateRow {
                user_id: r.user_id.clone(),
                change_time: t,
                covariates,
            })
        })
        .collect();
    let cov = read_covariates(&bytes(|w| write_covariates(w, &cov).unwrap())[..], "cov").unwrap();
    let status: BTreeMap<&str, bool> = rows.iter().map(|r| (r.user_id.as_str(), r.status.is_treated())).collect();
    let (t, c): (Vec<CovariateRow>, Vec<CovariateRow>) = cov.iter().cloned().partition(|r| status[r.user_id.as_str()]);
    assert_eq!((t.len(), c.len()), (300, 1500));

    let matched = match_cohort(&t, &c).unwrap();
    let (matches, unmatched) =
        read_matches(&bytes(|w| write_matches(w, &matched.outcome).unwrap())[..], "matches").unwrap();
    assert_eq!(matches, matched.outcome.matches);
    assert_eq!(unmatched, matched.outcome.unmatched);

    let ctx = OutcomeContext {
        index: &index,
        scores: &scores,
        matcher: &matcher,
        identity,
        config: PanelConfig::default(),
    };
    let kind = OutcomeKind::IdentityTweets;
    let outcomes = cov
        .iter()
        .map(|r| (r.user_id.clone(), ctx.outcome(&r.user_id, r.change_time, kind).unwrap()))
        .collect();
    let cov_map = cov.iter().map(|r| (r.user_id.clone(), r.covariates)).collect();
    let (panel, _) = assemble_panel(&identity.to_string(), kind, &matches, &outcomes, &cov_map);
    let panel = read_panel(&bytes(|w| write_panel(w, &panel).unwrap())[..], "panel").unwrap();

    let did = ModelSpec::did();
    let from_files = fit_nb_gee(&panel, &spec_for(&did, kind)).unwrap();
    let direct = analyze_cohort(&cohort, 0, kind, &did, true).unwrap().fit;
    let a = from_files.get(Term::TreatPost).unwrap();
    let b = direct.get(Term::TreatPost).unwrap();
    assert!((a.estimate - b.estimate).abs() < 1e-9, "{} vs {}", a.estimate, b.estimate);
    assert!((a.robust_se - b.robust_se).abs() < 1e-9);

    // The scenario's true effect is +30%.
    let (lo, hi) = percent_interval(a.estimate, a.robust_se);
    assert!(lo < 30.0 && 30.0 < hi, "[{lo:.1}, {hi:.1}]");
}
