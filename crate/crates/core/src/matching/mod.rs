//! Propensity-score matching: logistic propensity model, Fisher-Jenks strata,
//! same-week nearest-neighbor controls, and covariate balance.

mod balance;
mod covariates;
pub mod jenks;
mod propensity;
mod stratify;

use std::collections::BTreeMap;
use std::io::{Read, Write};

pub use balance::{is_degenerate, smd, weighted_smd, BalanceReport, BalanceRow, BALANCE_THRESHOLD};
pub use covariates::{
    extract_covariates, read_covariates, write_covariates, CovariateRow, CovariateVector, COVARIATE_HEADER,
    COVARIATE_NAMES,
};
pub use jenks::jenks_breaks;
pub use propensity::{fit_logistic, fit_propensity, log_likelihood, PropensityModel, Standardizer, RIDGE};
pub use stratify::{euclidean, n_strata, stratify_and_match, MatchOutcome, MatchSet, Stratum, Unit, MAX_CONTROLS};

use crate::csvio;
use crate::error::{Error, Result};

/// Everything the matching stage produces for one identity.
#[derive(Debug, Clone)]
pub struct MatchReport {
    pub model: PropensityModel,
    pub outcome: MatchOutcome,
    pub balance: BalanceReport,
}

/// Fit the propensity model, stratify, match and measure balance.
/// Covariates are z-scored once over the pooled sample for the distance.
pub fn match_cohort(treated: &[CovariateRow], controls: &[CovariateRow]) -> Result<MatchReport> {
    let tc: Vec<CovariateVector> = treated.iter().map(|r| r.covariates).collect();
    let cc: Vec<CovariateVector> = controls.iter().map(|r| r.covariates).collect();
    let model = fit_propensity(&tc, &cc)?;
    if !model.converged {
        return Err(Error::NonConvergence {
            iterations: model.iterations,
        });
    }
    let unit = |r: &CovariateRow| Unit {
        user_id: r.user_id.clone(),
        score: model.score(&r.covariates),
        week: r.week(),
        z: model.scaler.apply(&r.covariates.to_array()),
    };
    let tu: Vec<Unit> = treated.iter().map(unit).collect();
    let cu: Vec<Unit> = controls.iter().map(unit).collect();
    let outcome = stratify_and_match(&tu, &cu)?;

    let by_id: BTreeMap<&str, &CovariateVector> = treated
        .iter()
        .chain(controls)
        .map(|r| (r.user_id.as_str(), &r.covariates))
        .collect();
    let matched_t: Vec<CovariateVector> = outcome.matches.iter().map(|m| *by_id[m.treated_id.as_str()]).collect();
    let weights = outcome.control_weights();
    let matched_c: Vec<CovariateVector> = weights.keys().map(|id| *by_id[id]).collect();
    let w: Vec<f64> = weights.values().copied().collect();
    let balance = BalanceReport::compute(&tc, &cc, &matched_t, &matched_c, &w);
    Ok(MatchReport {
        model,
        outcome,
        balance,
    })
}

pub const MATCH_HEADER: [&str; 6] = ["treated_id", "control_id", "rank", "distance", "stratum", "week"];
pub const BALANCE_HEADER: [&str; 4] = ["covariate", "smd_before", "smd_after", "pass"];

/// One row per (treated, control) pair; unmatched treated users get a row with
/// empty control, rank, distance and stratum.
pub fn write_matches<W: Write>(out: W, outcome: &MatchOutcome) -> Result<()> {
    let mut w = csvio::writer(out, &MATCH_HEADER)?;
    let mut rows: Vec<(&str, Vec<String>)> = Vec::new();
    for m in &outcome.matches {
        for (rank, (c, d)) in m.control_ids.iter().zip(&m.distances).enumerate() {
            rows.push((
                m.treated_id.as_str(),
                vec![
                    m.treated_id.clone(),
                    c.clone(),
                    (rank + 1).to_string(),
                    d.to_string(),
                    m.stratum_index.to_string(),
                    m.week.to_string(),
                ],
            ));
        }
    }
    for t in &outcome.unmatched {
        rows.push((t.as_str(), vec![t.clone(), String::new(), String::new(), String::new(), String::new(), String::new()]));
    }
    rows.sort_by(|a, b| a.0.cmp(b.0));
    for (_, r) in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Matches and unmatched treated ids, both ordered by treated id.
pub fn read_matches<R: Read>(input: R, name: &str) -> Result<(Vec<MatchSet>, Vec<String>)> {
    let mut rdr = csvio::reader(input, name, &MATCH_HEADER)?;
    let mut sets: Vec<MatchSet> = Vec::new();
    let mut unmatched = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let treated = rec.get(0).unwrap_or("").to_owned();
        let control = rec.get(1).unwrap_or("");
        if control.is_empty() {
            unmatched.push(treated);
            continue;
        }
        let distance: f64 = csvio::parse_field(&rec, 3, "distance")?;
        let stratum: usize = csvio::parse_field(&rec, 4, "stratum")?;
        let week: i64 = csvio::parse_field(&rec, 5, "week")?;
        match sets.last_mut() {
            Some(last) if last.treated_id == treated => {
                last.control_ids.push(control.to_owned());
                last.distances.push(distance);
            }
            _ => sets.push(MatchSet {
                treated_id: treated,
                control_ids: vec![control.to_owned()],
                stratum_index: stratum,
                week,
                distances: vec![distance],
            }),
        }
    }
    unmatched.sort();
    Ok((sets, unmatched))
}

pub fn write_balance<W: Write>(out: W, report: &BalanceReport) -> Result<()> {
    let mut w = csvio::writer(out, &BALANCE_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.covariate.clone(),
            r.smd_before.to_string(),
            r.smd_after.to_string(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_balance<R: Read>(input: R, name: &str) -> Result<BalanceReport> {
    let mut rdr = csvio::reader(input, name, &BALANCE_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(BalanceRow {
            covariate: rec.get(0).unwrap_or("").to_owned(),
            smd_before: csvio::parse_field(&rec, 1, "smd_before")?,
            smd_after: csvio::parse_field(&rec, 2, "smd_after")?,
            pass: csvio::parse_field(&rec, 3, "pass")?,
        });
    }
    Ok(BalanceReport { rows })
}
