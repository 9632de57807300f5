use super::covariates::{CovariateVector, COVARIATE_NAMES};
use crate::error::{Error, Result};

pub const BALANCE_THRESHOLD: f64 = 0.1;

/// Weighted mean and unbiased (reliability-weight) variance; unit weights
/// give the `n - 1` sample variance.
fn mean_var(v: &[f64], w: &[f64]) -> (f64, f64) {
    let total: f64 = w.iter().sum();
    let squares: f64 = w.iter().map(|x| x * x).sum();
    let mean = v.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / total;
    let ss = v.iter().zip(w).map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>();
    (mean, ss / (total - squares / total))
}

/// Standardized mean difference |m_t - m_c| / sqrt((s_t^2 + s_c^2) / 2).
///
/// With both variances zero the result is 0 for equal means and +inf otherwise;
/// see [`is_degenerate`].
pub fn smd(treated: &[f64], control: &[f64]) -> Result<f64> {
    weighted_smd(treated, control, &vec![1.0; control.len()])
}

/// [`smd`] with the control group weighted, as after matching with reuse.
pub fn weighted_smd(treated: &[f64], control: &[f64], control_weights: &[f64]) -> Result<f64> {
    if treated.len() < 2 || control.len() < 2 {
        return Err(Error::invalid("smd needs at least two values per group"));
    }
    if control_weights.len() != control.len() || control_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::invalid("smd weights must be positive, one per control"));
    }
    let (mt, vt) = mean_var(treated, &vec![1.0; treated.len()]);
    let (mc, vc) = mean_var(control, control_weights);
    let pooled = ((vt + vc) / 2.0).sqrt();
    let diff = (mt - mc).abs();
    if pooled == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(diff / pooled)
}

/// True for the infinite sentinel of two constant groups with different values.
pub fn is_degenerate(value: f64) -> bool {
    value.is_infinite()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceRow {
    pub covariate: String,
    pub smd_before: f64,
    pub smd_after: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
}

impl BalanceReport {
    /// SMD of every covariate for the full sample (`before`) and the matched
    /// sample (`after`). Groups too small to compare give NaN and fail.
    pub fn compute(
        treated_all: &[CovariateVector],
        control_all: &[CovariateVector],
        treated_matched: &[CovariateVector],
        control_matched: &[CovariateVector],
        control_weights: &[f64],
    ) -> Self {
        let column = |set: &[CovariateVector], j: usize| -> Vec<f64> { set.iter().map(|c| c.to_array()[j]).collect() };
        let rows = COVARIATE_NAMES
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let before = smd(&column(treated_all, j), &column(control_all, j)).unwrap_or(f64::NAN);
                let after = weighted_smd(&column(treated_matched, j), &column(control_matched, j), control_weights)
                    .unwrap_or(f64::NAN);
                BalanceRow {
                    covariate: name.to_string(),
                    smd_before: before,
                    smd_after: after,
                    pass: after.abs() < BALANCE_THRESHOLD,
                }
            })
            .collect();
        Self { rows }
    }

    pub fn all_pass(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    pub fn get(&self, covariate: &str) -> Option<&BalanceRow> {
        self.rows.iter().find(|r| r.covariate == covariate)
    }
}
