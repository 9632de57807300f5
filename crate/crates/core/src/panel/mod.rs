//! Pre/post outcome panels: activity counts, identity-scored counts, ego-network
//! degrees and offensive replies around each user's profile change.

mod assemble;
mod ego;
mod outcomes;
mod scores;

pub use assemble::{
    assemble_groups, assemble_panel, control_weights, read_panel, write_panel, Controls, PanelObservation, PanelReport, UserOutcome, PANEL_HEADER,
};
pub use ego::{build_ego_network, Edge, EgoConfig, EgoGraph};
pub use outcomes::{
    count_offensive_replies, count_outcomes, period_of, CountConfig, OffensiveCounts, OutcomeCounts, OutcomeKind,
    Period,
};
pub use scores::{read_scores, write_scores, ScoreTable, OFFENSIVE, SCORE_HEADER};

use crate::error::Result;
use crate::identity_rules::{IdentityId, Matcher};
use crate::ingest::EventIndex;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PanelConfig {
    pub counts: CountConfig,
    pub ego: EgoConfig,
}

/// Shared read-only inputs for computing any outcome of one identity.
pub struct OutcomeContext<'a> {
    pub index: &'a EventIndex<'a>,
    pub scores: &'a ScoreTable,
    pub matcher: &'a Matcher,
    pub identity: &'a IdentityId,
    pub config: PanelConfig,
}

impl OutcomeContext<'_> {
    pub fn outcome(&self, user: &str, change_time: i64, kind: OutcomeKind) -> Result<UserOutcome> {
        let score_name = self.identity.score_name();
        let authored = self.index.authored_by(user);
        Ok(match kind {
            OutcomeKind::TotalTweets
            | OutcomeKind::TotalRetweets
            | OutcomeKind::IdentityTweets
            | OutcomeKind::IdentityRetweets => {
                let c = count_outcomes(authored, self.scores, Some(&score_name), change_time, kind, self.config.counts)?;
                UserOutcome {
                    y_pre: c.y_pre,
                    y_post: c.y_post,
                    exposure: kind.has_exposure().then_some((c.exposure_pre, c.exposure_post)),
                    n_id: None,
                    flagged: c.flagged,
                }
            }
            OutcomeKind::OffensiveReplies => {
                let c = count_offensive_replies(
                    user,
                    self.index.targeting(user),
                    authored,
                    self.scores,
                    &score_name,
                    change_time,
                    self.config.counts,
                );
                UserOutcome {
                    y_pre: c.y_pre,
                    y_post: c.y_post,
                    exposure: None,
                    n_id: Some((c.n_id_pre, c.n_id_post)),
                    flagged: c.flagged,
                }
            }
            _ => {
                let (pre, post) = build_ego_network(self.index, self.matcher, user, change_time, self.config.ego);
                let degree = |g: &EgoGraph| -> u64 {
                    (match kind {
                        OutcomeKind::OutDegree => g.out_degree(),
                        OutcomeKind::InDegree => g.in_degree(),
                        OutcomeKind::SameIdentityOutDegree => g.same_identity_out_degree(self.identity),
                        _ => g.same_identity_in_degree(self.identity),
                    }) as u64
                };
                UserOutcome {
                    y_pre: degree(&pre),
                    y_post: degree(&post),
                    ..Default::default()
                }
            }
        })
    }
}
