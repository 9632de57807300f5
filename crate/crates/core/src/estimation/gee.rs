use nalgebra::{DMatrix, DVector};
use statrs::function::erf::erfc;

use super::design::{build_design, Design, Family, ModelSpec, Term};
use crate::error::{Error, Result};
use crate::panel::PanelObservation;

const TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;
const ETA_LIMIT: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TermEstimate {
    pub term: Term,
    pub estimate: f64,
    pub robust_se: f64,
    pub z: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub terms: Vec<TermEstimate>,
    /// Negative-binomial dispersion; 0 for a Poisson fit.
    pub alpha: f64,
    pub family: Family,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub converged: bool,
    pub iterations: usize,
    /// The negative-binomial fit failed and this is the Poisson refit.
    pub fallback_used: bool,
}

impl FitResult {
    pub fn get(&self, term: Term) -> Option<&TermEstimate> {
        self.terms.iter().find(|t| t.term == term)
    }

    pub fn coefficient(&self, term: Term) -> Option<f64> {
        self.get(term).map(|t| t.estimate)
    }
}

/// Two-sided normal p-value.
pub fn normal_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b)).or_else(|| a.clone().lu().solve(b))
}

fn invert(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().cholesky().map(|c| c.inverse()).or_else(|| a.clone().try_inverse())
}

fn mean_of(d: &Design, beta: &DVector<f64>) -> DVector<f64> {
    (&d.x * beta + &d.offset).map(|e| e.clamp(-ETA_LIMIT, ETA_LIMIT).exp())
}

/// Weighted moment estimate of the dispersion from Pearson-type residuals,
/// floored at 0. Unit weights give the usual `n - p` denominator.
pub fn moment_alpha(y: &DVector<f64>, mu: &DVector<f64>, weight: &DVector<f64>, p: usize) -> f64 {
    let total = weight.sum();
    if total <= p as f64 {
        return 0.0;
    }
    let s: f64 = (0..y.len())
        .map(|i| weight[i] * ((y[i] - mu[i]).powi(2) - mu[i]) / (mu[i] * mu[i]))
        .sum();
    (s / (total - p as f64)).max(0.0)
}

struct Solution {
    beta: DVector<f64>,
    alpha: f64,
    iterations: usize,
    converged: bool,
}

/// IRLS for the log-link mean model with variance mu + alpha mu^2. With
/// `estimate_alpha` the dispersion is re-estimated between coefficient updates.
fn irls(d: &Design, estimate_alpha: bool) -> Option<Solution> {
    let n = d.y.len();
    let p = d.x.ncols();
    let ybar = d.y.mean();
    let mut mu = d.y.map(|y| (y + ybar) / 2.0).map(|m| m.max(1e-3));
    let mut eta = mu.map(f64::ln);
    let mut alpha = 0.0;
    let mut beta = DVector::<f64>::zeros(p);
    let mut first = true;
    for it in 1..=MAX_ITER {
        let w = mu.zip_map(&d.weight, |m, wt| wt * m / (1.0 + alpha * m));
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        let mut xtwz = DVector::<f64>::zeros(p);
        for i in 0..n {
            let z = eta[i] - d.offset[i] + (d.y[i] - mu[i]) / mu[i];
            let xi = d.x.row(i);
            for a in 0..p {
                let wa = w[i] * xi[a];
                xtwz[a] += wa * z;
                for b in 0..=a {
                    xtwx[(a, b)] += wa * xi[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let next = solve_spd(&xtwx, &xtwz)?;
        if next.iter().any(|b| !b.is_finite()) {
            return None;
        }
        let delta = if first { f64::INFINITY } else { (&next - &beta).amax() };
        first = false;
        beta = next;
        mu = mean_of(d, &beta);
        eta = &d.x * &beta + &d.offset;
        let new_alpha = if estimate_alpha { moment_alpha(&d.y, &mu, &d.weight, p) } else { 0.0 };
        let alpha_delta = (new_alpha - alpha).abs();
        alpha = new_alpha;
        if delta < TOL && alpha_delta < TOL.max(1e-8 * alpha) {
            return Some(Solution {
                beta,
                alpha,
                iterations: it,
                converged: true,
            });
        }
    }
    Some(Solution {
        beta,
        alpha,
        iterations: MAX_ITER,
        converged: false,
    })
}

fn sandwich(d: &Design, beta: &DVector<f64>, alpha: f64) -> Option<DVector<f64>> {
    let p = d.x.ncols();
    let mu = mean_of(d, beta);
    let mut bread = DMatrix::<f64>::zeros(p, p);
    let mut scores = vec![DVector::<f64>::zeros(p); d.n_clusters];
    for i in 0..d.y.len() {
        let xi = d.x.row(i).transpose();
        let denom = 1.0 + alpha * mu[i];
        let wt = d.weight[i];
        bread += &xi * xi.transpose() * (wt * mu[i] / denom);
        scores[d.cluster[i]] += &xi * (wt * (d.y[i] - mu[i]) / denom);
    }
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for s in &scores {
        meat += s * s.transpose();
    }
    let inv = invert(&bread)?;
    let cov = &inv * meat * &inv;
    Some(cov.diagonal().map(|v| v.max(0.0).sqrt()))
}

fn assemble(d: &Design, sol: Solution, family: Family, fallback_used: bool) -> Option<FitResult> {
    let se = sandwich(d, &sol.beta, sol.alpha)?;
    let terms = d
        .terms
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let z = sol.beta[j] / se[j];
            TermEstimate {
                term: *t,
                estimate: sol.beta[j],
                robust_se: se[j],
                z,
                p: normal_p(z),
            }
        })
        .collect();
    Some(FitResult {
        terms,
        alpha: sol.alpha,
        family,
        n_obs: d.y.len(),
        n_clusters: d.n_clusters,
        converged: sol.converged,
        iterations: sol.iterations,
        fallback_used,
    })
}

/// Fit a design matrix directly (used by the panel entry point and by tests).
pub fn fit_design(d: &Design, family: Family) -> Result<FitResult> {
    let nb = family == Family::NegativeBinomial;
    if let Some(sol) = irls(d, nb) {
        if sol.converged {
            if let Some(fit) = assemble(d, sol, family, false) {
                return Ok(fit);
            }
        }
    }
    if nb {
        log::warn!("negative-binomial fit did not converge; refitting as Poisson");
        if let Some(sol) = irls(d, false) {
            if sol.converged {
                if let Some(fit) = assemble(d, sol, Family::Poisson, true) {
                    return Ok(fit);
                }
            }
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITER })
}

/// Negative-binomial GEE with independence working correlation and
/// cluster-robust (user) sandwich errors.
pub fn fit_nb_gee(panel: &[PanelObservation], spec: &ModelSpec) -> Result<FitResult> {
    let d = build_design(panel, spec)?;
    fit_design(&d, spec.family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{Controls, OutcomeKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, Poisson};

    fn obs(user: usize, treated: bool, post: bool, y: u64, friends: f64) -> PanelObservation {
        PanelObservation {
            identity: "x:y".into(),
            outcome: OutcomeKind::TotalTweets,
            user_id: format!("u{user:05}"),
            treated,
            post,
            y,
            exposure: None,
            n_id: None,
            controls: Controls {
                n_friends: friends,
                n_followers: friends * 2.0 + 3.0,
                n_posts_total: (friends * 7.0) % 50.0,
            },
            weight: 1.0,
        }
    }

    fn nb_draw(rng: &mut ChaCha8Rng, mu: f64, alpha: f64) -> u64 {
        let lambda = if alpha > 0.0 {
            Gamma::new(1.0 / alpha, mu * alpha).unwrap().sample(rng)
        } else {
            mu
        };
        if lambda <= 0.0 {
            0
        } else {
            Poisson::new(lambda).unwrap().sample(rng) as u64
        }
    }

    /// 2x2 panel with per-cell means, `n` users per group.
    fn two_by_two(rng: &mut ChaCha8Rng, n: usize, means: [f64; 4], alpha: f64) -> Vec<PanelObservation> {
        let mut v = Vec::new();
        for u in 0..2 * n {
            let treated = u < n;
            for post in [false, true] {
                let mu = means[usize::from(treated) * 2 + usize::from(post)];
                v.push(obs(u, treated, post, nb_draw(rng, mu, alpha), 0.0));
            }
        }
        v
    }

    fn cell_mean(panel: &[PanelObservation], treated: bool, post: bool) -> f64 {
        let ys: Vec<f64> = panel
            .iter()
            .filter(|o| o.treated == treated && o.post == post)
            .map(|o| o.y as f64)
            .collect();
        ys.iter().sum::<f64>() / ys.len() as f64
    }

    #[test]
    fn equal_cells_give_zero_interaction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut panel = two_by_two(&mut rng, 50, [4.0; 4], 0.5);
        // Force identical cell sums.
        for (i, o) in panel.iter_mut().enumerate() {
            o.y = (i % 5) as u64 * 2;
        }
        for o in panel.iter_mut() {
            let u: usize = o.user_id[1..].parse().unwrap();
            o.y = (u % 5) as u64 * 2 + 1;
        }
        let fit = fit_nb_gee(&panel, &ModelSpec::saturated()).unwrap();
        assert!(fit.coefficient(Term::TreatPost).unwrap().abs() < 1e-6);
    }

    #[test]
    fn saturated_model_reproduces_cell_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let means = [rng.random_range(1.0..8.0), rng.random_range(1.0..8.0), rng.random_range(1.0..8.0), rng.random_range(1.0..8.0)];
            let n = rng.random_range(10..60);
            let alpha = rng.random_range(0.0..1.5);
            let panel = two_by_two(&mut rng, n, means, alpha);
            let fit = fit_nb_gee(&panel, &ModelSpec::saturated()).unwrap();
            let m = |t, p| cell_mean(&panel, t, p);
            let ror = (m(true, true) / m(true, false)) / (m(false, true) / m(false, false));
            assert!((fit.coefficient(Term::TreatPost).unwrap().exp() - ror).abs() < 1e-6 * ror);
            assert!((fit.coefficient(Term::Treat).unwrap().exp() - m(true, false) / m(false, false)).abs() < 1e-6);
            assert!((fit.coefficient(Term::Post).unwrap().exp() - m(false, true) / m(false, false)).abs() < 1e-6);
            assert!(fit.terms.iter().all(|t| t.robust_se > 0.0 && (0.0..=1.0).contains(&t.p)));
        }
    }

    #[test]
    fn recovers_covariate_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut panel = Vec::new();
        for u in 0..3000 {
            let treated = u % 3 == 0;
            let friends: f64 = (rng.random_range(0.0f64..6.0)).exp();
            for post in [false, true] {
                let t = f64::from(u8::from(treated));
                let p = f64::from(u8::from(post));
                let eta = 0.2 + 0.3 * friends.ln_1p() + 0.1 * t + 0.2 * p + 0.25 * t * p;
                panel.push(obs(u, treated, post, nb_draw(&mut rng, eta.exp(), 0.8), friends));
            }
        }
        let mut spec = ModelSpec::saturated();
        spec.terms.insert(1, Term::LogFriends);
        let fit = fit_nb_gee(&panel, &spec).unwrap();
        let b4 = fit.get(Term::TreatPost).unwrap();
        assert!((b4.estimate - 0.25).abs() < 3.0 * b4.robust_se, "{b4:?}");
        assert!((fit.coefficient(Term::LogFriends).unwrap() - 0.3).abs() < 0.03);
        assert!((fit.alpha - 0.8).abs() < 0.15, "alpha {}", fit.alpha);
        assert!(!fit.fallback_used);
    }

    #[test]
    fn poisson_matches_nb_on_equidispersed_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut panel = Vec::new();
        for u in 0..2000 {
            let treated = u % 2 == 0;
            let friends: f64 = rng.random_range(1.0..100.0);
            for post in [false, true] {
                let eta = 1.0 + 0.2 * friends.ln_1p() + if treated && post { 0.3 } else { 0.0 };
                panel.push(obs(u, treated, post, nb_draw(&mut rng, eta.exp(), 0.0), friends));
            }
        }
        let mut spec = ModelSpec::saturated();
        spec.terms.insert(1, Term::LogFriends);
        let nb = fit_nb_gee(&panel, &spec).unwrap();
        let po = fit_nb_gee(&panel, &spec.clone().with_family(Family::Poisson)).unwrap();
        assert!(nb.alpha < 0.02, "alpha {}", nb.alpha);
        for (a, b) in nb.terms.iter().zip(&po.terms) {
            assert!((a.estimate - b.estimate).abs() < 1e-3, "{a:?} {b:?}");
        }
    }

    #[test]
    fn standard_errors_shrink_with_more_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ses = Vec::new();
        for n in [50, 200, 800, 3200] {
            let mut reps = Vec::new();
            for _ in 0..5 {
                let panel = two_by_two(&mut rng, n, [3.0, 3.5, 3.0, 4.5], 0.5);
                reps.push(fit_nb_gee(&panel, &ModelSpec::saturated()).unwrap().get(Term::TreatPost).unwrap().robust_se);
            }
            ses.push(reps.iter().sum::<f64>() / reps.len() as f64);
        }
        assert!(ses.iter().all(|s| *s > 0.0));
        assert!(ses.windows(2).all(|w| w[1] < w[0]), "{ses:?}");
    }

    #[test]
    fn zero_cell_does_not_converge() {
        let mut panel = Vec::new();
        for u in 0..20 {
            let treated = u < 10;
            for post in [false, true] {
                let y = if treated && post { 0 } else { 3 + (u % 3) as u64 };
                panel.push(obs(u, treated, post, y, 0.0));
            }
        }
        assert!(matches!(fit_nb_gee(&panel, &ModelSpec::saturated()), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn p_values() {
        assert!((normal_p(1.959963984540054) - 0.05).abs() < 1e-9);
        assert_eq!(normal_p(0.0), 1.0);
    }
}
