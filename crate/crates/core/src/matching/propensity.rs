use nalgebra::{DMatrix, DVector};

use super::covariates::CovariateVector;
use crate::error::{Error, Result};

pub const RIDGE: f64 = 1e-6;
const TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;

/// Pooled column means and standard deviations; zero-variance columns map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut means = vec![0.0; p];
        for r in rows {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut sds = vec![0.0; p];
        if rows.len() > 1 {
            for r in rows {
                for ((s, v), m) in sds.iter_mut().zip(r).zip(&means) {
                    *s += (v - m).powi(2);
                }
            }
            for s in &mut sds {
                *s = (*s / (n - 1.0)).sqrt();
            }
        }
        Self { means, sds }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    /// Coefficients on the standardized covariates.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
    pub scaler: Standardizer,
    /// Penalized log-likelihood after each accepted step, starting from the initial point.
    pub trace: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of a linear predictor.
pub fn log_likelihood(eta: &[f64], y: &[bool]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(e, &t)| if t { e - softplus(*e) } else { -softplus(*e) })
        .sum()
}

fn penalized(x: &DMatrix<f64>, y: &[bool], beta: &DVector<f64>, ridge: f64) -> f64 {
    let eta = x * beta;
    let pen: f64 = beta.iter().skip(1).map(|b| b * b).sum::<f64>() * ridge / 2.0;
    log_likelihood(eta.as_slice(), y) - pen
}

/// Ridge-penalized logistic regression by IRLS on already standardized rows.
/// The intercept is unpenalized. Returns (intercept, weights, converged, iterations, trace).
pub fn fit_logistic(rows: &[Vec<f64>], y: &[bool], ridge: f64) -> Result<(f64, Vec<f64>, bool, usize, Vec<f64>)> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let mut x = DMatrix::zeros(n, p + 1);
    for (i, r) in rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, v) in r.iter().enumerate() {
            x[(i, j + 1)] = *v;
        }
    }
    let n1 = y.iter().filter(|t| **t).count() as f64;
    let mut beta = DVector::zeros(p + 1);
    beta[0] = (n1 / (n as f64 - n1)).ln();
    let mut ll = penalized(&x, y, &beta, ridge);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        let eta = &x * &beta;
        let mu: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let mut grad = DVector::zeros(p + 1);
        let mut hess = DMatrix::zeros(p + 1, p + 1);
        for i in 0..n {
            let r = if y[i] { 1.0 } else { 0.0 } - mu[i];
            let w = mu[i] * (1.0 - mu[i]);
            let xi = x.row(i);
            for a in 0..=p {
                grad[a] += xi[a] * r;
                for b in 0..=a {
                    hess[(a, b)] += w * xi[a] * xi[b];
                }
            }
        }
        for a in 0..=p {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        for j in 1..=p {
            grad[j] -= ridge * beta[j];
            hess[(j, j)] += ridge;
        }
        // Tiny jitter on the intercept keeps the system solvable when every
        // fitted probability saturates.
        hess[(0, 0)] += 1e-12;
        let Some(step) = hess.clone().cholesky().map(|c| c.solve(&grad)).or_else(|| hess.lu().solve(&grad)) else {
            break;
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + &step * scale;
            let cand_ll = penalized(&x, y, &cand, ridge);
            if cand_ll >= ll {
                accepted = Some((cand, cand_ll));
                break;
            }
            scale /= 2.0;
        }
        let Some((next, next_ll)) = accepted else {
            // No ascent direction left at machine precision.
            converged = step.amax() * scale < TOL || grad.amax() < 1e-10;
            break;
        };
        let delta = (&next - &beta).amax();
        beta = next;
        ll = next_ll;
        trace.push(ll);
        if delta < TOL {
            converged = true;
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonConvergence { iterations });
    }
    Ok((beta[0], beta.iter().skip(1).copied().collect(), converged, iterations, trace))
}

pub fn fit_propensity(treated: &[CovariateVector], control: &[CovariateVector]) -> Result<PropensityModel> {
    if treated.is_empty() || control.is_empty() {
        return Err(Error::invalid("propensity model needs at least one treated and one control user"));
    }
    for c in treated.iter().chain(control) {
        if c.to_array().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite covariate"));
        }
    }
    let raw: Vec<Vec<f64>> = treated.iter().chain(control).map(|c| c.to_array().to_vec()).collect();
    let y: Vec<bool> = (0..raw.len()).map(|i| i < treated.len()).collect();
    let scaler = Standardizer::fit(&raw);
    let z: Vec<Vec<f64>> = raw.iter().map(|r| scaler.apply(r)).collect();
    let (intercept, weights, converged, iterations, trace) = fit_logistic(&z, &y, RIDGE)?;
    Ok(PropensityModel {
        weights,
        intercept,
        converged,
        iterations,
        scaler,
        trace,
    })
}

impl PropensityModel {
    pub fn linear_predictor(&self, cov: &CovariateVector) -> f64 {
        let z = self.scaler.apply(&cov.to_array());
        self.intercept + self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>()
    }

    pub fn score(&self, cov: &CovariateVector) -> f64 {
        sigmoid(self.linear_predictor(cov))
    }

    /// Unpenalized log-likelihood of the fitted model on a labelled sample.
    pub fn log_likelihood(&self, treated: &[CovariateVector], control: &[CovariateVector]) -> f64 {
        let eta: Vec<f64> = treated.iter().chain(control).map(|c| self.linear_predictor(c)).collect();
        let y: Vec<bool> = (0..eta.len()).map(|i| i < treated.len()).collect();
        log_likelihood(&eta, &y)
    }
}
