//! Detection of identity-disclosure events in profile histories and estimation
//! of their behavioral effects.
//!
//! The crate is organised as a pipeline:
//!
//! - [`ingest`] parses activity streams and rebuilds per-user profile timelines.
//! - [`identity_rules`] compiles a regex identity taxonomy, labels profiles and
//!   classifies users into disclosure cohorts.
//! - [`matching`] fits a propensity model, stratifies with Fisher-Jenks breaks and
//!   matches treated users to same-week controls.
//! - [`panel`] turns events and matches into pre/post outcome panels.
//! - [`estimation`] fits negative-binomial GEE difference-in-differences models
//!   with cluster-robust errors and Holm correction.
//! - [`distances`] holds the topic/style comparison statistics.
//! - [`synthcohort`] generates synthetic cohorts with known ground truth.

pub mod distances;
pub mod error;
pub mod estimation;
pub mod identity_rules;
pub mod ingest;
pub mod matching;
pub mod panel;
pub mod synthcohort;
pub mod time;

mod csvio;

pub use error::{Error, Result};
pub use estimation::{EffectReport, FitResult, ModelSpec, Term};
pub use identity_rules::{CohortStatus, IdentityId, IdentityLabel, Matcher, Taxonomy};
pub use ingest::{ActivityEvent, EventKind, ProfileTimeline};
pub use matching::{BalanceReport, CovariateVector, MatchSet, PropensityModel, Stratum};
pub use panel::{OutcomeKind, PanelObservation, ScoreTable};
pub use synthcohort::{GroundTruth, SynthConfig};
