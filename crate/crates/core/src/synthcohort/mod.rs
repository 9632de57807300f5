//! Synthetic cohorts with known effects: a generator of users, their activity
//! and profile changes, and a writer for the event files the pipeline reads.

mod config;
mod generate;
mod materialize;
mod style;

pub use config::{
    Activity, AnalysisParams, CovariateParams, IdentitySpec, LogNormal, NetworkParams, ScoreMixture, SynthConfig,
    TrueBeta, BUNDLED_SCENARIOS,
};
pub use generate::{
    analyze_cohort, frailty, generate_cohort, nb_sample, Cohort, CohortAnalysis, NetEdge, PeriodDraw, SynthUser,
    MIN_ACCOUNT_DAYS,
};
pub use materialize::{
    materialize, write_materialized, GroundTruth, Materialized, TruthEffect, TruthEvent, TruthUser, EVENTS_FILE,
    FILLER_BIOS, SCENARIO_FILE, SCORES_FILE, TRUTH_EVENTS_FILE, TRUTH_EVENT_HEADER, TRUTH_FILE, TRUTH_USERS_FILE,
    TRUTH_USER_HEADER,
};
pub use style::{style_fixture, write_style_fixture, StyleFixture, StyleParams, STYLES_FILE, STYLE_GROUPS, TOPICS_FILE};
