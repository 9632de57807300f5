use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::Error;
use crate::panel::{OutcomeKind, PanelObservation};

use super::design::{ModelSpec, Term};
use super::effects::EffectReport;
use super::gee::{fit_nb_gee, FitResult};
use super::holm::holm_correct;

/// Coefficients reported and corrected as separate Holm families.
pub const REPORTED_TERMS: [Term; 3] = [Term::TreatPost, Term::LogNid, Term::LogNidTreatPost];

#[derive(Debug)]
pub struct FitFailure {
    pub identity: String,
    pub outcome: OutcomeKind,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct Experiment {
    /// Sorted by outcome, then identity, then term.
    pub reports: Vec<EffectReport>,
    pub fits: Vec<(String, OutcomeKind, FitResult)>,
    pub failures: Vec<FitFailure>,
}

impl Experiment {
    pub fn fallbacks(&self) -> usize {
        self.fits.iter().filter(|(_, _, f)| f.fallback_used).count()
    }
}

/// The spec actually fitted for one outcome: the exposure offset is dropped
/// for outcomes that carry no exposure.
pub fn spec_for(spec: &ModelSpec, outcome: OutcomeKind) -> ModelSpec {
    let offset = spec.offset && outcome.has_exposure();
    spec.clone().with_offset(offset)
}

/// Fit every (identity, outcome) panel contained in `panel` and Holm-correct
/// each (outcome, term) family across identities.
pub fn run_experiment(panel: &[PanelObservation], spec: &ModelSpec, alpha: f64) -> Experiment {
    let mut groups: BTreeMap<(OutcomeKind, &str), Vec<PanelObservation>> = BTreeMap::new();
    for o in panel {
        groups.entry((o.outcome, o.identity.as_str())).or_default().push(o.clone());
    }
    let results: Vec<_> = groups
        .into_par_iter()
        .map(|((outcome, identity), rows)| {
            let fit = fit_nb_gee(&rows, &spec_for(spec, outcome));
            (identity.to_owned(), outcome, fit)
        })
        .collect();

    let mut exp = Experiment::default();
    for (identity, outcome, fit) in results {
        match fit {
            Ok(fit) => exp.fits.push((identity, outcome, fit)),
            Err(error) => {
                log::warn!("{identity} / {outcome}: fit failed: {error}");
                exp.failures.push(FitFailure {
                    identity,
                    outcome,
                    error,
                });
            }
        }
    }

    let mut families: BTreeMap<(OutcomeKind, Term), Vec<EffectReport>> = BTreeMap::new();
    for (identity, outcome, fit) in &exp.fits {
        for term in REPORTED_TERMS {
            if let Some(r) = EffectReport::from_fit(identity, *outcome, fit, term, alpha) {
                families.entry((*outcome, term)).or_default().push(r);
            }
        }
    }
    for mut family in families.into_values() {
        let p: Vec<f64> = family.iter().map(|r| r.p_raw).collect();
        let (adjusted, reject) = holm_correct(&p, alpha).expect("fit p-values lie in [0, 1]");
        for ((r, a), rej) in family.iter_mut().zip(adjusted).zip(reject) {
            r.p_holm = a;
            r.significant = rej;
        }
        exp.reports.extend(family);
    }
    exp.reports
        .sort_by(|a, b| (a.outcome, &a.identity, a.term).cmp(&(b.outcome, &b.identity, b.term)));
    exp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::gee::fit_nb_gee;
    use crate::panel::Controls;

    fn panel(identity: &str, lift: u64, n: usize) -> Vec<PanelObservation> {
        let mut v = Vec::new();
        for u in 0..n {
            let treated = u % 2 == 0;
            for post in [false, true] {
                let base = 3 + (u % 4) as u64;
                let wobble = if post { (u % 3) as u64 } else { (u % 5 == 0) as u64 };
                let y = if treated && post { base + lift + wobble } else { base + wobble };
                v.push(PanelObservation {
                    identity: identity.into(),
                    outcome: OutcomeKind::TotalTweets,
                    user_id: format!("{identity}-{u:04}"),
                    treated,
                    post,
                    y,
                    exposure: Some(y + 3),
                    n_id: None,
                    controls: Controls::default(),
                    weight: 1.0,
                });
            }
        }
        v
    }

    #[test]
    fn single_identity_matches_direct_fit() {
        let p = panel("a:b", 2, 40);
        let exp = run_experiment(&p, &ModelSpec::saturated(), 0.05);
        let direct = fit_nb_gee(&p, &ModelSpec::saturated()).unwrap();
        assert_eq!(exp.reports.len(), 1);
        let r = &exp.reports[0];
        let t = direct.get(Term::TreatPost).unwrap();
        assert_eq!((r.estimate, r.robust_se, r.p_raw, r.p_holm), (t.estimate, t.robust_se, t.p, t.p));
    }

    #[test]
    fn failures_are_excluded_from_family() {
        let mut p = panel("a:b", 2, 40);
        p.extend(panel("c:d", 0, 40));
        // An identity with no treated users cannot be fitted.
        p.extend(panel("e:f", 0, 40).into_iter().filter(|o| !o.treated));
        let exp = run_experiment(&p, &ModelSpec::saturated(), 0.05);
        assert_eq!(exp.failures.len(), 1);
        assert_eq!(exp.failures[0].identity, "e:f");
        assert_eq!(exp.reports.len(), 2);
        for r in &exp.reports {
            assert!((r.p_holm - (r.p_raw * 2.0).min(1.0)).abs() < 1e-12 || r.p_holm >= r.p_raw);
        }
        assert!(exp.reports[0].significant);
        assert!(!exp.reports[1].significant);
    }

    #[test]
    fn offset_dropped_without_exposure() {
        assert!(spec_for(&ModelSpec::did().with_offset(true), OutcomeKind::IdentityTweets).offset);
        assert!(!spec_for(&ModelSpec::did().with_offset(true), OutcomeKind::OutDegree).offset);
    }
}
