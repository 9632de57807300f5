use crate::error::{Error, Result};

/// Holm step-down adjustment. Returns adjusted p-values and reject flags in
/// input order. Ties in the raw p-values keep their input order.
pub fn holm_correct(p: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("p-value {bad} outside [0, 1]")));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (j, &i) in order.iter().enumerate() {
        running = running.max(((m - j) as f64 * p[i]).min(1.0));
        adjusted[i] = running;
    }
    let reject = adjusted.iter().map(|a| *a < alpha).collect();
    Ok((adjusted, reject))
}
