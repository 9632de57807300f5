use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identity_rules::{IdentityId, Taxonomy};
use crate::panel::OutcomeKind;

/// Names of the scenario files shipped with the crate.
pub const BUNDLED_SCENARIOS: [&str; 6] = ["null", "confounded-null", "confounded-effect", "network", "interaction", "e2e"];

fn bundled_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "null" => include_str!("../../data/scenarios/null.toml"),
        "confounded-null" => include_str!("../../data/scenarios/confounded-null.toml"),
        "confounded-effect" => include_str!("../../data/scenarios/confounded-effect.toml"),
        "network" => include_str!("../../data/scenarios/network.toml"),
        "interaction" => include_str!("../../data/scenarios/interaction.toml"),
        "e2e" => include_str!("../../data/scenarios/e2e.toml"),
        _ => return None,
    })
}

/// Log-normal parameters of a covariate: `exp(mu + sigma * z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormal {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateParams {
    /// Account age beyond the minimum of [`MIN_ACCOUNT_DAYS`](super::MIN_ACCOUNT_DAYS).
    pub days_since_creation: LogNormal,
    pub n_friends: LogNormal,
    pub n_followers: LogNormal,
    pub n_posts_total: LogNormal,
}

impl CovariateParams {
    pub(crate) fn get(&self, name: &str) -> Option<LogNormal> {
        match name {
            "days_since_creation" => Some(self.days_since_creation),
            "n_friends" => Some(self.n_friends),
            "n_followers" => Some(self.n_followers),
            "n_posts_total" => Some(self.n_posts_total),
            _ => None,
        }
    }

    pub(crate) fn all(&self) -> [LogNormal; 4] {
        [self.days_since_creation, self.n_friends, self.n_followers, self.n_posts_total]
    }
}

/// Coefficients of the outcome model on the log-mean scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueBeta {
    pub b0: f64,
    /// On log1p(friends), log1p(followers), log1p(posts), each centered at its `mu`.
    #[serde(default)]
    pub b1: [f64; 3],
    #[serde(default)]
    pub b2: f64,
    #[serde(default)]
    pub b3: f64,
    #[serde(default)]
    pub b4: f64,
    #[serde(default)]
    pub b5: f64,
    #[serde(default)]
    pub b6: f64,
}

/// Mean counts per 30-day window of activity that is not the modeled outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activity {
    #[serde(default)]
    pub other_tweets: f64,
    #[serde(default)]
    pub retweets: f64,
    #[serde(default)]
    pub benign_replies: f64,
    /// Offensive replies received when they are not the modeled outcome.
    #[serde(default)]
    pub offensive_replies: f64,
    /// Identity tweets when they are not the modeled outcome.
    #[serde(default)]
    pub identity_tweets: f64,
    /// Log multiplier on identity tweets of treated users after the change,
    /// used only when identity tweets are not the modeled outcome.
    #[serde(default)]
    pub identity_lift: f64,
}

/// Classifier score model: a true item scores above 0.5 with probability
/// `*_exceed`, a false item with probability `non*_exceed`. Within each side of
/// the threshold scores are uniform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreMixture {
    pub identity_exceed: f64,
    pub nonidentity_exceed: f64,
    pub offensive_exceed: f64,
    pub nonoffensive_exceed: f64,
}

impl Default for ScoreMixture {
    fn default() -> Self {
        Self {
            identity_exceed: 1.0,
            nonidentity_exceed: 0.0,
            offensive_exceed: 1.0,
            nonoffensive_exceed: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    /// Probability an out-edge targets a same-identity alter (everyone before
    /// the change, controls after).
    pub h_control: f64,
    /// Same, for treated users after the change.
    pub h_treated: f64,
    /// Probability an in-edge comes from a same-identity alter, for everyone.
    pub h_in: f64,
    /// Mean out-edges and in-edges per ego per twelve-week period.
    pub out_edges: f64,
    pub in_edges: f64,
    /// Alters per identity pool and in the identity-free pool.
    pub alters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySpec {
    pub name: String,
    /// Overrides `beta.b4` for this identity.
    #[serde(default)]
    pub b4: Option<f64>,
}

/// Analysis settings written into the pipeline config that `simulate` emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisParams {
    pub spec: String,
    #[serde(default)]
    pub offset: bool,
    pub outcomes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub name: String,
    pub seed: u64,
    /// Treated users per identity.
    pub n_treated: usize,
    /// Users who change their profile without disclosing anything.
    pub n_control_pool: usize,
    #[serde(default = "default_start")]
    pub start_time: i64,
    /// Profile changes fall uniformly in this many weeks after `start_time`.
    pub weeks_span: i64,
    /// Loading of the confounder index on the treatment log-odds.
    pub gamma: f64,
    /// Loading of the confounder index on the post-period log-mean (a
    /// covariate-dependent trend, which difference-in-differences alone does not remove).
    #[serde(default)]
    pub theta: f64,
    /// Covariates whose standardized values form the confounder index.
    #[serde(default)]
    pub confounders: Vec<String>,
    /// Negative-binomial dispersion of the modeled outcome.
    pub alpha: f64,
    /// `identity_tweets` or `offensive_replies`.
    pub outcome: String,
    pub identities: Vec<IdentitySpec>,
    pub beta: TrueBeta,
    pub covariates: CovariateParams,
    #[serde(default = "default_activity")]
    pub activity: Activity,
    #[serde(default)]
    pub scores: ScoreMixture,
    #[serde(default)]
    pub network: Option<NetworkParams>,
    pub analysis: AnalysisParams,
}

fn default_start() -> i64 {
    // 2020-09-13T12:26:40Z
    1_600_000_000
}

fn default_activity() -> Activity {
    Activity {
        other_tweets: 0.0,
        retweets: 0.0,
        benign_replies: 0.0,
        offensive_replies: 0.0,
        identity_tweets: 0.0,
        identity_lift: 0.0,
    }
}

fn prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")))
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let src = bundled_source(name).ok_or_else(|| {
            Error::Config(format!("unknown scenario `{name}`; bundled: {}", BUNDLED_SCENARIOS.join(", ")))
        })?;
        Self::from_toml(src)
    }

    pub fn bundled_text(name: &str) -> Option<&'static str> {
        bundled_source(name)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn outcome_kind(&self) -> Result<OutcomeKind> {
        match self.outcome.parse::<OutcomeKind>() {
            Ok(k @ (OutcomeKind::IdentityTweets | OutcomeKind::OffensiveReplies)) => Ok(k),
            _ => Err(Error::Config(format!(
                "outcome `{}` cannot be simulated (expected identity_tweets or offensive_replies)",
                self.outcome
            ))),
        }
    }

    pub fn identity_ids(&self) -> Result<Vec<IdentityId>> {
        self.identities.iter().map(|i| i.name.parse()).collect()
    }

    pub fn b4(&self, identity: usize) -> f64 {
        self.identities[identity].b4.unwrap_or(self.beta.b4)
    }

    /// Reject infeasible settings before anything is generated.
    pub fn validate(&self) -> Result<()> {
        if self.n_treated == 0 || self.n_control_pool == 0 {
            return Err(Error::Config("n_treated and n_control_pool must be positive".into()));
        }
        if self.weeks_span < 1 || self.weeks_span > 24 {
            return Err(Error::Config("weeks_span must lie in 1..=24".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        for (name, v) in [("gamma", self.gamma), ("theta", self.theta)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        let b = &self.beta;
        if [b.b0, b.b2, b.b3, b.b4, b.b5, b.b6].iter().chain(&b.b1).any(|v| !v.is_finite()) {
            return Err(Error::Config("beta coefficients must be finite".into()));
        }
        for c in &self.confounders {
            if self.covariates.get(c).is_none() {
                return Err(Error::Config(format!(
                    "confounder `{c}` is not one of days_since_creation, n_friends, n_followers, n_posts_total"
                )));
            }
        }
        for p in self.covariates.all() {
            if !p.mu.is_finite() || !(p.sigma >= 0.0 && p.sigma.is_finite()) {
                return Err(Error::Config("covariate mu must be finite and sigma non-negative".into()));
            }
        }
        let a = &self.activity;
        for (name, v) in [
            ("activity.other_tweets", a.other_tweets),
            ("activity.retweets", a.retweets),
            ("activity.benign_replies", a.benign_replies),
            ("activity.offensive_replies", a.offensive_replies),
            ("activity.identity_tweets", a.identity_tweets),
        ] {
            nonneg(name, v)?;
        }
        if !a.identity_lift.is_finite() {
            return Err(Error::Config("activity.identity_lift must be finite".into()));
        }
        let s = &self.scores;
        prob("scores.identity_exceed", s.identity_exceed)?;
        prob("scores.nonidentity_exceed", s.nonidentity_exceed)?;
        prob("scores.offensive_exceed", s.offensive_exceed)?;
        prob("scores.nonoffensive_exceed", s.nonoffensive_exceed)?;
        if let Some(n) = &self.network {
            prob("network.h_control", n.h_control)?;
            prob("network.h_treated", n.h_treated)?;
            prob("network.h_in", n.h_in)?;
            nonneg("network.out_edges", n.out_edges)?;
            nonneg("network.in_edges", n.in_edges)?;
            if n.alters == 0 {
                return Err(Error::Config("network.alters must be positive".into()));
            }
        }
        let kind = self.outcome_kind()?;
        if kind == OutcomeKind::OffensiveReplies && a.identity_tweets <= 0.0 {
            return Err(Error::Config("offensive_replies scenarios need activity.identity_tweets > 0".into()));
        }
        if self.identities.is_empty() {
            return Err(Error::Config("at least one identity is required".into()));
        }
        if kind == OutcomeKind::OffensiveReplies && self.identities.len() != 1 {
            return Err(Error::Config("offensive_replies scenarios take exactly one identity".into()));
        }
        let taxonomy = Taxonomy::bundled();
        let retained = taxonomy.retained_identities();
        for (i, spec) in self.identities.iter().enumerate() {
            let id: IdentityId = spec.name.parse().map_err(|e| Error::Config(format!("{e}")))?;
            if !retained.contains(&id) {
                return Err(Error::Config(format!("identity `{id}` is not a retained subcategory of the bundled taxonomy")));
            }
            if taxonomy.subcategory(&id).is_none_or(|s| s.examples.is_empty()) {
                return Err(Error::Config(format!("identity `{id}` has no example phrases to synthesize profiles from")));
            }
            if self.identities[..i].iter().any(|o| o.name == spec.name) {
                return Err(Error::Config(format!("identity `{id}` listed twice")));
            }
            if spec.b4.is_some_and(|v| !v.is_finite()) {
                return Err(Error::Config(format!("b4 of `{id}` must be finite")));
            }
        }
        crate::estimation::ModelSpec::by_name(&self.analysis.spec)?;
        for o in &self.analysis.outcomes {
            o.parse::<OutcomeKind>().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}
