use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use super::config::{LogNormal, SynthConfig};
use crate::error::{Error, Result};
use crate::estimation::{cell_ratio_of_ratios, fit_nb_gee, FitResult, ModelSpec};
use crate::identity_rules::IdentityId;
use crate::matching::{match_cohort, CovariateRow, CovariateVector, MatchReport};
use crate::panel::{assemble_groups, assemble_panel, OutcomeKind, PanelObservation, PanelReport, UserOutcome};
use crate::time::{SECONDS_PER_DAY, SECONDS_PER_WEEK};

/// Every synthetic account is at least this old at its profile change, so all
/// of its activity windows postdate the account.
pub const MIN_ACCOUNT_DAYS: f64 = 100.0;

const CHUNK: usize = 4096;

/// Independent generator for one user: the scenario seed picks the key and the
/// user's index picks the stream, so output does not depend on thread count.
pub(crate) fn user_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// Gamma-Poisson draw with mean `mu` and variance `mu + alpha mu^2`.
pub fn nb_sample<R: Rng>(rng: &mut R, mu: f64, alpha: f64) -> u64 {
    if !(mu > 0.0) {
        return 0;
    }
    let lambda = mu * frailty(rng, alpha);
    poisson_sample(rng, lambda)
}

/// Mean-one gamma multiplier with variance `alpha`.
pub fn frailty<R: Rng>(rng: &mut R, alpha: f64) -> f64 {
    if alpha > 0.0 {
        Gamma::new(1.0 / alpha, alpha).expect("valid gamma").sample(rng)
    } else {
        1.0
    }
}

pub(crate) fn poisson_sample<R: Rng>(rng: &mut R, lambda: f64) -> u64 {
    if lambda > 0.0 {
        Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
    } else {
        0
    }
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    Binomial::new(n, p).expect("probability checked by config").sample(rng)
}

/// Item counts of one user in one 30-day window.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PeriodDraw {
    /// True identity tweets, per scenario identity.
    pub identity_tweets: Vec<u64>,
    /// Of those, how many score above 0.5 for their identity.
    pub identity_hits: Vec<u64>,
    /// Other tweets of the user that still score above 0.5 for that identity.
    pub false_hits: Vec<u64>,
    pub other_tweets: u64,
    pub retweets: u64,
    pub offensive_replies: u64,
    pub offensive_hits: u64,
    pub benign_replies: u64,
    /// Benign replies that score above 0.5 for offensiveness.
    pub benign_hits: u64,
}

impl PeriodDraw {
    pub fn tweets(&self) -> u64 {
        self.identity_tweets.iter().sum::<u64>() + self.other_tweets
    }

    /// Identity tweets as a thresholded classifier would count them.
    pub fn observed_identity(&self, identity: usize) -> u64 {
        self.identity_hits[identity] + self.false_hits[identity]
    }

    pub fn replies(&self) -> u64 {
        self.offensive_replies + self.benign_replies
    }

    pub fn observed_offensive(&self) -> u64 {
        self.offensive_hits + self.benign_hits
    }
}

/// One interaction between an ego and a member of the synthetic alter pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetEdge {
    pub timestamp: i64,
    /// A retweet of the alter by the ego, or of the ego by the alter.
    pub outgoing: bool,
    /// `Some(i)` for the pool of identity `i`, `None` for the identity-free pool.
    pub pool: Option<usize>,
    pub alter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUser {
    pub user_id: String,
    /// Index into the scenario identities of the identity this user discloses.
    pub treated_identity: Option<usize>,
    pub change_time: i64,
    pub account_created_at: i64,
    pub covariates: CovariateVector,
    /// Standardized confounder index driving treatment odds and trend.
    pub confounder: f64,
    pub pre: PeriodDraw,
    pub post: PeriodDraw,
    /// Model mean of the simulated outcome (own identity, or the first one
    /// for controls) before and after the change.
    pub expected: [f64; 2],
    /// Ego-network interactions over twelve weeks either side of the change;
    /// empty unless the scenario has a network.
    pub edges: Vec<NetEdge>,
}

impl SynthUser {
    pub fn is_treated_for(&self, identity: usize) -> bool {
        self.treated_identity == Some(identity)
    }

    /// Retweets of alters inside the 30-day window on one side of the change.
    pub fn edge_retweets(&self, post: bool) -> u64 {
        let w = 30 * SECONDS_PER_DAY;
        let c = self.change_time;
        self.edges
            .iter()
            .filter(|e| e.outgoing)
            .filter(|e| if post { e.timestamp > c && e.timestamp <= c + w } else { e.timestamp >= c - w && e.timestamp < c })
            .count() as u64
    }

    fn period(&self, post: bool) -> &PeriodDraw {
        if post {
            &self.post
        } else {
            &self.pre
        }
    }
}

/// A generated population before event materialization.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub config: SynthConfig,
    pub identities: Vec<IdentityId>,
    /// In user-id order.
    pub users: Vec<SynthUser>,
    /// Candidates drawn to fill the treated and control quotas.
    pub candidates: usize,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Candidate {
    user: SynthUser,
}

fn draw_candidate(cfg: &SynthConfig, n_ids: usize, intercept: f64, kind: OutcomeKind, index: usize) -> Candidate {
    let mut rng = user_rng(cfg.seed, 1, index as u64);
    let params = cfg.covariates.all();
    let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let value = |j: usize| (params[j].mu + params[j].sigma * z[j]).exp();
    let names = ["days_since_creation", "n_friends", "n_followers", "n_posts_total"];
    // The index is linear in the standardized covariate values themselves, the
    // scale on which the propensity model is fitted.
    let standardized: Vec<f64> = (0..4)
        .map(|j| {
            let LogNormal { mu, sigma } = params[j];
            let mean = (mu + sigma * sigma / 2.0).exp();
            let sd = (sigma * sigma).exp_m1().sqrt() * mean;
            if sd > 0.0 {
                (value(j) - mean) / sd
            } else {
                0.0
            }
        })
        .collect();
    let confounder = if cfg.confounders.is_empty() {
        0.0
    } else {
        let k = cfg.confounders.len() as f64;
        names
            .iter()
            .zip(standardized)
            .filter(|(n, _)| cfg.confounders.iter().any(|c| c == *n))
            .map(|(_, v)| v)
            .sum::<f64>()
            / k.sqrt()
    };
    let treated = rng.random::<f64>() < sigmoid(intercept + cfg.gamma * confounder);
    let identity = treated.then(|| rng.random_range(0..n_ids));
    let change_time = cfg.start_time + rng.random_range(0..cfg.weeks_span * SECONDS_PER_WEEK);
    let days = MIN_ACCOUNT_DAYS + value(0);
    let account_created_at = change_time - (days * SECONDS_PER_DAY as f64).round() as i64;
    let friends = value(1).round();
    let followers = value(2).round();
    let posts = value(3).round();

    // Level covariates on the same log1p scale the estimator uses.
    let x = [
        friends.ln_1p() - params[1].mu,
        followers.ln_1p() - params[2].mu,
        posts.ln_1p() - params[3].mu,
    ];
    let b = &cfg.beta;
    let level = b.b0 + b.b1.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
    let act = &cfg.activity;
    let sc = &cfg.scores;
    let own = identity.unwrap_or(0);
    let mut expected = [0.0; 2];
    // One multiplier per modeled series, shared by both windows: each window is
    // marginally NB(mu, alpha) and a user's activity level persists across the change.
    let shared: Vec<f64> = (0..n_ids).map(|_| frailty(&mut rng, cfg.alpha)).collect();
    let mut periods = [PeriodDraw::default(), PeriodDraw::default()];
    for (p, draw) in periods.iter_mut().enumerate() {
        let post = p as f64;
        let trend = post * (b.b3 + cfg.theta * confounder);
        draw.identity_tweets = (0..n_ids)
            .map(|a| {
                let t = f64::from(u8::from(identity == Some(a)));
                let mu = match kind {
                    OutcomeKind::OffensiveReplies => act.identity_tweets * (act.identity_lift * t * post).exp(),
                    _ => (level + b.b2 * t + trend + cfg.b4(a) * t * post).exp(),
                };
                if kind == OutcomeKind::OffensiveReplies {
                    return nb_sample(&mut rng, mu, cfg.alpha);
                }
                if a == own {
                    expected[p] = mu;
                }
                poisson_sample(&mut rng, mu * shared[a])
            })
            .collect();
        draw.other_tweets = poisson_sample(&mut rng, act.other_tweets);
        draw.retweets = poisson_sample(&mut rng, act.retweets);
        let total = draw.tweets();
        draw.identity_hits = draw
            .identity_tweets
            .iter()
            .map(|&y| binomial(&mut rng, y, sc.identity_exceed))
            .collect();
        draw.false_hits = draw
            .identity_tweets
            .iter()
            .map(|&y| binomial(&mut rng, total - y, sc.nonidentity_exceed))
            .collect();
        draw.offensive_replies = match kind {
            OutcomeKind::OffensiveReplies => {
                let t = f64::from(u8::from(treated));
                let nid = (draw.observed_identity(0) as f64).ln_1p();
                let mu = (level + b.b2 * t + trend + b.b4 * t * post + b.b5 * nid + b.b6 * nid * t * post).exp();
                expected[p] = mu;
                poisson_sample(&mut rng, mu * shared[0])
            }
            _ => poisson_sample(&mut rng, act.offensive_replies),
        };
        draw.benign_replies = poisson_sample(&mut rng, act.benign_replies);
        draw.offensive_hits = binomial(&mut rng, draw.offensive_replies, sc.offensive_exceed);
        draw.benign_hits = binomial(&mut rng, draw.benign_replies, sc.nonoffensive_exceed);
    }
    let mut edges = Vec::new();
    if let Some(net) = &cfg.network {
        // Controls lean towards one scenario identity, treated users towards their own.
        let affinity = identity.unwrap_or_else(|| rng.random_range(0..n_ids));
        let window = 12 * SECONDS_PER_WEEK;
        for post in [false, true] {
            for outgoing in [true, false] {
                let (mean, h) = match (outgoing, post && treated) {
                    (true, true) => (net.out_edges, net.h_treated),
                    (true, false) => (net.out_edges, net.h_control),
                    (false, _) => (net.in_edges, net.h_in),
                };
                for _ in 0..poisson_sample(&mut rng, mean) {
                    let offset = rng.random_range(0..window);
                    let timestamp = if post { change_time + 1 + offset } else { change_time - window + offset };
                    let pool = (rng.random::<f64>() < h).then_some(affinity);
                    let alter = rng.random_range(0..net.alters);
                    edges.push(NetEdge {
                        timestamp,
                        outgoing,
                        pool,
                        alter,
                    });
                }
            }
        }
    }
    let [pre, post] = periods;
    let mut user = SynthUser {
        user_id: format!("u{index:07}"),
        treated_identity: identity,
        change_time,
        account_created_at,
        covariates: CovariateVector::default(),
        confounder,
        pre,
        post,
        expected,
        edges,
    };
    user.covariates = CovariateVector {
        days_since_creation: (change_time - account_created_at) as f64 / SECONDS_PER_DAY as f64,
        n_friends: friends,
        n_followers: followers,
        n_posts_total: posts,
        n_tweets_prev_month: user.pre.tweets() as f64,
        n_retweets_prev_month: (user.pre.retweets + user.edge_retweets(false)) as f64,
    };
    Candidate { user }
}

/// Draw candidates until every identity has `n_treated` treated users and the
/// control pool is full. Treatment is Bernoulli in the confounder index, so the
/// accepted users follow the confounded conditional distributions exactly.
pub fn generate_cohort(cfg: &SynthConfig) -> Result<Cohort> {
    cfg.validate()?;
    let kind = cfg.outcome_kind()?;
    let identities = cfg.identity_ids()?;
    let n_ids = identities.len();
    let want_treated = cfg.n_treated * n_ids;
    let intercept = logit(want_treated as f64 / (want_treated + cfg.n_control_pool) as f64);
    let limit = 1000 * (want_treated + cfg.n_control_pool);

    let mut treated_left = vec![cfg.n_treated; n_ids];
    let mut controls_left = cfg.n_control_pool;
    let mut users = Vec::with_capacity(want_treated + cfg.n_control_pool);
    let mut next = 0usize;
    while treated_left.iter().any(|&n| n > 0) || controls_left > 0 {
        if next >= limit {
            return Err(Error::Config(format!(
                "scenario `{}` cannot fill its quotas; treatment odds are too extreme",
                cfg.name
            )));
        }
        let batch: Vec<Candidate> = (next..next + CHUNK)
            .into_par_iter()
            .map(|i| draw_candidate(cfg, n_ids, intercept, kind, i))
            .collect();
        next += CHUNK;
        for c in batch {
            let slot = match c.user.treated_identity {
                Some(a) => &mut treated_left[a],
                None => &mut controls_left,
            };
            if *slot > 0 {
                *slot -= 1;
                users.push(c.user);
            }
            if treated_left.iter().all(|&n| n == 0) && controls_left == 0 {
                break;
            }
        }
    }
    let candidates = users.last().map_or(0, |u| u.user_id[1..].parse::<usize>().unwrap_or(0) + 1);
    Ok(Cohort {
        config: cfg.clone(),
        identities,
        users,
        candidates,
    })
}

impl Cohort {
    pub fn treated(&self, identity: usize) -> impl Iterator<Item = &SynthUser> {
        self.users.iter().filter(move |u| u.is_treated_for(identity))
    }

    pub fn controls(&self) -> impl Iterator<Item = &SynthUser> {
        self.users.iter().filter(|u| u.treated_identity.is_none())
    }

    fn rows<'a>(users: impl Iterator<Item = &'a SynthUser>) -> Vec<CovariateRow> {
        users
            .map(|u| CovariateRow {
                user_id: u.user_id.clone(),
                change_time: u.change_time,
                covariates: u.covariates,
            })
            .collect()
    }

    /// Covariate rows of the treated users of `identity` and of the control pool.
    pub fn covariate_rows(&self, identity: usize) -> (Vec<CovariateRow>, Vec<CovariateRow>) {
        (Self::rows(self.treated(identity)), Self::rows(self.controls()))
    }

    pub fn covariate_map(&self) -> BTreeMap<String, CovariateVector> {
        self.users.iter().map(|u| (u.user_id.clone(), u.covariates)).collect()
    }

    /// The outcome tuple the panel stage would compute from the materialized
    /// events. Network outcomes are not defined at cohort level.
    pub fn outcome(&self, user: &SynthUser, identity: usize, kind: OutcomeKind) -> Result<UserOutcome> {
        let pair = |f: &dyn Fn(&PeriodDraw) -> u64| (f(user.period(false)), f(user.period(true)));
        let (y, exposure, n_id) = match kind {
            OutcomeKind::TotalTweets => (pair(&|d| d.tweets()), None, None),
            OutcomeKind::TotalRetweets => (
                (user.pre.retweets + user.edge_retweets(false), user.post.retweets + user.edge_retweets(true)),
                None,
                None,
            ),
            OutcomeKind::IdentityTweets => (
                pair(&|d| d.observed_identity(identity)),
                Some(pair(&|d| d.tweets())),
                None,
            ),
            OutcomeKind::OffensiveReplies => (
                pair(&|d| d.observed_offensive()),
                None,
                Some(pair(&|d| d.observed_identity(identity))),
            ),
            other => {
                return Err(Error::invalid(format!("outcome {other} is not available at cohort level")));
            }
        };
        // Mirrors the panel stage: scored activity must exist in some window.
        let flagged = match kind {
            OutcomeKind::IdentityTweets => exposure.is_some_and(|(a, b)| a + b == 0),
            _ => false,
        };
        Ok(UserOutcome {
            y_pre: y.0,
            y_post: y.1,
            exposure,
            n_id,
            flagged,
        })
    }

    pub fn outcomes(&self, identity: usize, kind: OutcomeKind) -> Result<BTreeMap<String, UserOutcome>> {
        self.users
            .iter()
            .map(|u| Ok((u.user_id.clone(), self.outcome(u, identity, kind)?)))
            .collect()
    }
}

/// Result of estimating one identity's effect directly on a cohort.
#[derive(Debug, Clone)]
pub struct CohortAnalysis {
    pub matching: Option<MatchReport>,
    pub panel: Vec<PanelObservation>,
    pub report: PanelReport,
    pub fit: FitResult,
}

impl CohortAnalysis {
    /// Ratio-of-ratios of raw cell means over this analysis's panel.
    pub fn naive_ratio(&self) -> Option<f64> {
        cell_ratio_of_ratios(&self.panel)
    }
}

/// Build the panel of `identity` (matched, or every treated user against the
/// whole control pool) and fit `spec`.
pub fn analyze_cohort(
    cohort: &Cohort,
    identity: usize,
    kind: OutcomeKind,
    spec: &ModelSpec,
    matched: bool,
) -> Result<CohortAnalysis> {
    let name = cohort.identities[identity].to_string();
    let outcomes = cohort.outcomes(identity, kind)?;
    let covariates = cohort.covariate_map();
    let (matching, (panel, report)) = if matched {
        let (t, c) = cohort.covariate_rows(identity);
        let m = match_cohort(&t, &c)?;
        let assembled = assemble_panel(&name, kind, &m.outcome.matches, &outcomes, &covariates);
        (Some(m), assembled)
    } else {
        let t: BTreeSet<&str> = cohort.treated(identity).map(|u| u.user_id.as_str()).collect();
        let c: BTreeMap<&str, f64> = cohort.controls().map(|u| (u.user_id.as_str(), 1.0)).collect();
        (None, assemble_groups(&name, kind, &t, &c, &outcomes, &covariates))
    };
    let fit = fit_nb_gee(&panel, &crate::estimation::spec_for(spec, kind))?;
    Ok(CohortAnalysis {
        matching,
        panel,
        report,
        fit,
    })
}
