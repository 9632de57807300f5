//! Identity taxonomy, profile labeling, cohort classification and labeler evaluation.

mod cohort;
mod evaluate;
mod labeler;
mod taxonomy;

pub use cohort::{
    classify_all, classify_user, read_cohort, write_cohort, CohortRow, CohortStatus, ObservationWindow, COHORT_HEADER,
};
pub use evaluate::{
    bundled_fixture, evaluate_labeler, read_fixture, read_fixture_path, Confusion, FixtureCase, LabelerEvaluation,
    Scores,
};
#[cfg(test)]
pub(crate) use labeler::bundled_matcher;
pub use labeler::{label_profile, normalize_profile, IdentityLabel, Matcher, ProfileLabels};
pub use taxonomy::{Category, IdentityId, IdentityRule, Subcategory, Taxonomy};

/// Compile a taxonomy file into a matcher.
pub fn compile_taxonomy(path: &std::path::Path) -> crate::Result<Matcher> {
    Matcher::compile(&Taxonomy::from_path(path)?)
}
