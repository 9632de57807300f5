use std::io::{Read, Write};

use crate::csvio;
use crate::error::{Error, Result};
use crate::panel::{OutcomeKind, PanelObservation};

use super::design::Term;
use super::gee::FitResult;

const Z95: f64 = 1.96;

/// Percent change in the expected count implied by a log-scale coefficient.
pub fn effect_percent(beta: f64) -> f64 {
    100.0 * beta.exp_m1()
}

/// 95% interval on the percent scale, from exponentiated coefficient endpoints.
pub fn percent_interval(beta: f64, se: f64) -> (f64, f64) {
    (effect_percent(beta - Z95 * se), effect_percent(beta + Z95 * se))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Positive,
    Negative,
    NotSignificant,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
            Direction::NotSignificant => "not_significant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectReport {
    pub identity: String,
    pub outcome: OutcomeKind,
    pub term: Term,
    pub estimate: f64,
    pub robust_se: f64,
    pub p_raw: f64,
    /// Holm-adjusted within the (outcome, term) family; equals `p_raw` until corrected.
    pub p_holm: f64,
    pub percent_effect: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub significant: bool,
    pub fallback_used: bool,
}

impl EffectReport {
    /// Uncorrected report for one coefficient of a fit, if the fit has it.
    pub fn from_fit(identity: &str, outcome: OutcomeKind, fit: &FitResult, term: Term, alpha: f64) -> Option<Self> {
        let t = fit.get(term)?;
        let (ci_low, ci_high) = percent_interval(t.estimate, t.robust_se);
        Some(Self {
            identity: identity.to_owned(),
            outcome,
            term,
            estimate: t.estimate,
            robust_se: t.robust_se,
            p_raw: t.p,
            p_holm: t.p,
            percent_effect: effect_percent(t.estimate),
            ci_low,
            ci_high,
            significant: t.p < alpha,
            fallback_used: fit.fallback_used,
        })
    }

    pub fn direction(&self) -> Direction {
        match (self.significant, self.estimate > 0.0) {
            (false, _) => Direction::NotSignificant,
            (true, true) => Direction::Positive,
            (true, false) => Direction::Negative,
        }
    }

    /// Whether the percent-scale interval contains `percent`.
    pub fn covers(&self, percent: f64) -> bool {
        self.ci_low <= percent && percent <= self.ci_high
    }
}

/// (T post / T pre) / (C post / C pre) of weighted cell means.
pub fn cell_ratio_of_ratios(panel: &[PanelObservation]) -> Option<f64> {
    let mut sums = [0.0f64; 4];
    let mut weights = [0.0f64; 4];
    for o in panel {
        let k = usize::from(o.treated) * 2 + usize::from(o.post);
        sums[k] += o.weight * o.y as f64;
        weights[k] += o.weight;
    }
    if weights.contains(&0.0) {
        return None;
    }
    let m: Vec<f64> = sums.iter().zip(weights).map(|(s, w)| s / w).collect();
    let r = (m[3] / m[2]) / (m[1] / m[0]);
    r.is_finite().then_some(r)
}

pub const EFFECT_HEADER: [&str; 12] = [
    "identity",
    "outcome",
    "term",
    "estimate",
    "robust_se",
    "p_raw",
    "p_holm",
    "percent_effect",
    "ci_low",
    "ci_high",
    "significant",
    "fallback_used",
];

fn num(v: f64) -> String {
    format!("{v:.10}")
}

pub fn write_effects<W: Write>(out: W, rows: &[EffectReport]) -> Result<()> {
    let mut w = csvio::writer(out, &EFFECT_HEADER)?;
    for r in rows {
        w.write_record([
            r.identity.clone(),
            r.outcome.to_string(),
            r.term.to_string(),
            num(r.estimate),
            num(r.robust_se),
            num(r.p_raw),
            num(r.p_holm),
            num(r.percent_effect),
            num(r.ci_low),
            num(r.ci_high),
            r.significant.to_string(),
            r.fallback_used.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_effects<R: Read>(input: R, name: &str) -> Result<Vec<EffectReport>> {
    let mut rdr = csvio::reader(input, name, &EFFECT_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = EffectReport {
            identity: rec.get(0).unwrap_or("").to_owned(),
            outcome: csvio::parse_field(&rec, 1, "outcome")?,
            term: csvio::parse_field(&rec, 2, "term")?,
            estimate: csvio::parse_field(&rec, 3, "estimate")?,
            robust_se: csvio::parse_field(&rec, 4, "robust_se")?,
            p_raw: csvio::parse_field(&rec, 5, "p_raw")?,
            p_holm: csvio::parse_field(&rec, 6, "p_holm")?,
            percent_effect: csvio::parse_field(&rec, 7, "percent_effect")?,
            ci_low: csvio::parse_field(&rec, 8, "ci_low")?,
            ci_high: csvio::parse_field(&rec, 9, "ci_high")?,
            significant: csvio::parse_field(&rec, 10, "significant")?,
            fallback_used: csvio::parse_field(&rec, 11, "fallback_used")?,
        };
        if !(0.0..=1.0).contains(&row.p_raw) || !(0.0..=1.0).contains(&row.p_holm) {
            return Err(Error::invalid(format!("{name}: p-value outside [0, 1] for `{}`", row.identity)));
        }
        rows.push(row);
    }
    Ok(rows)
}
