//! Deterministic rule-based oracle over a synthetic world.
//!
//! The oracle stands in for the remote LLM so that every downstream result
//! is derivable by hand and bitwise-reproducible. Rules:
//!
//! - Perceive: description := title, attributes := ground-truth tags.
//! - Learn on a Like: candidate likes := item tags minus critique-flagged
//!   tags, dislikes := empty (symmetric for a Dislike).
//! - Act: score := |tags ∩ like-facets| - |tags ∩ dislike-facets|; Like iff
//!   score > 0, otherwise Dislike (ties are conservative).
//! - Critic: pass iff predicted == actual; on failure the facets that drove
//!   the wrong sign become the reasons.
//! - Reflect: facets present under both polarities are dropped from both
//!   and surfaced as user queries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{Action, Item, ItemId, UserId};
use crate::error::{RahError, Result};

use super::grammar;
use super::{
    AgentPayload, AgentRequest, AgentResponse, AgentResult, Backend, BackendKind, Confidence,
};

/// Ground-truth tag preferences for one synthetic user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldUser {
    pub liked_tags: BTreeSet<String>,
    pub disliked_tags: BTreeSet<String>,
    pub noise_rate: f64,
}

impl WorldUser {
    pub fn validate(&self) -> Result<()> {
        if self
            .liked_tags
            .intersection(&self.disliked_tags)
            .next()
            .is_some()
        {
            return Err(RahError::Validation(
                "liked and disliked tag sets overlap".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(RahError::Validation(format!(
                "noise rate {} out of [0,1)",
                self.noise_rate
            )));
        }
        Ok(())
    }
}

/// Desk-scale stand-in for real users plus a real LLM: a catalog with
/// ground-truth tags and users with ground-truth tag preferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub catalog: BTreeMap<ItemId, Item>,
    pub users: BTreeMap<UserId, WorldUser>,
    pub seed: u64,
}

impl SyntheticWorld {
    pub fn validate(&self) -> Result<()> {
        for user in self.users.values() {
            user.validate()?;
        }
        Ok(())
    }

    pub fn item(&self, id: &ItemId) -> Result<&Item> {
        self.catalog
            .get(id)
            .ok_or_else(|| RahError::Lookup(format!("unknown item {id}")))
    }

    pub fn user(&self, id: &UserId) -> Result<&WorldUser> {
        self.users
            .get(id)
            .ok_or_else(|| RahError::Lookup(format!("unknown user {id}")))
    }

    /// Noise-free action of the synthetic human: Like iff strictly more
    /// liked than disliked tags match.
    pub fn true_action(&self, user: &UserId, item: &ItemId) -> Result<Action> {
        let u = self.user(user)?;
        let it = self.item(item)?;
        let liked = it.tags.intersection(&u.liked_tags).count();
        let disliked = it.tags.intersection(&u.disliked_tags).count();
        Ok(if liked > disliked {
            Action::Like
        } else {
            Action::Dislike
        })
    }

    /// The user's ground-truth stance on one tag, used to answer reflect
    /// queries. `None` means indifferent.
    pub fn tag_preference(&self, user: &UserId, tag: &str) -> Result<Option<Action>> {
        let u = self.user(user)?;
        Ok(if u.liked_tags.contains(tag) {
            Some(Action::Like)
        } else if u.disliked_tags.contains(tag) {
            Some(Action::Dislike)
        } else {
            None
        })
    }
}

/// Backend that answers every agent request from the fixed oracle rules.
/// Pure given the world: identical requests yield identical responses.
pub struct OracleBackend<'w> {
    world: &'w SyntheticWorld,
}

impl<'w> OracleBackend<'w> {
    pub fn new(world: &'w SyntheticWorld) -> Self {
        OracleBackend { world }
    }

    pub fn world(&self) -> &SyntheticWorld {
        self.world
    }
}

pub(super) fn act_score(
    attributes: &BTreeSet<String>,
    like_facets: &BTreeSet<String>,
    dislike_facets: &BTreeSet<String>,
) -> i64 {
    let liked = attributes.intersection(like_facets).count() as i64;
    let disliked = attributes.intersection(dislike_facets).count() as i64;
    liked - disliked
}

fn oracle_result(world: &SyntheticWorld, payload: &AgentPayload) -> Result<AgentResult> {
    match payload {
        AgentPayload::Perceive { item, .. } => {
            let it = world.item(item)?;
            Ok(AgentResult::Perceived {
                description: it.title.clone(),
                attributes: it.tags.clone(),
            })
        }
        AgentPayload::Learn {
            user,
            item,
            attributes,
            action,
            flagged_facets,
            ..
        } => {
            world.user(user)?;
            world.item(item)?;
            let kept: BTreeSet<String> =
                attributes.difference(flagged_facets).cloned().collect();
            let (likes, dislikes) = match action {
                Action::Like => (kept, BTreeSet::new()),
                Action::Dislike => (BTreeSet::new(), kept),
            };
            let why_like = format!(
                "some may like it for: {}",
                grammar::join_facets(attributes)
            );
            let why_dislike = format!(
                "some may dislike it for: {}",
                grammar::join_facets(attributes)
            );
            Ok(AgentResult::Learned {
                likes,
                dislikes,
                why_like,
                why_dislike,
            })
        }
        AgentPayload::Act {
            user,
            item,
            attributes,
            like_facets,
            dislike_facets,
            ..
        } => {
            world.user(user)?;
            world.item(item)?;
            let score = act_score(attributes, like_facets, dislike_facets);
            let predicted = if score > 0 { Action::Like } else { Action::Dislike };
            let matched_likes: BTreeSet<String> =
                attributes.intersection(like_facets).cloned().collect();
            let matched_dislikes: BTreeSet<String> =
                attributes.intersection(dislike_facets).cloned().collect();
            Ok(AgentResult::Acted {
                hypothesized_reasons: format!(
                    "liked facets matched: [{}]; disliked facets matched: [{}]",
                    grammar::join_facets(&matched_likes),
                    grammar::join_facets(&matched_dislikes)
                ),
                perception_analysis: format!("net facet score {score}"),
                simulated_comment: match predicted {
                    Action::Like => "this fits my taste".to_string(),
                    Action::Dislike => "not for me".to_string(),
                },
                confidence: if score == 0 {
                    Confidence::Low
                } else {
                    Confidence::High
                },
                predicted,
            })
        }
        AgentPayload::Critic {
            user,
            item,
            attributes,
            predicted,
            actual,
            like_facets,
            dislike_facets,
        } => {
            world.user(user)?;
            world.item(item)?;
            if predicted == actual {
                return Ok(AgentResult::Judged {
                    pass: true,
                    reasons: Vec::new(),
                    suggestions: Vec::new(),
                });
            }
            // The facets that pushed the score to the wrong sign.
            let offending: BTreeSet<String> = match predicted {
                Action::Like => attributes.intersection(like_facets).cloned().collect(),
                Action::Dislike => attributes.intersection(dislike_facets).cloned().collect(),
            };
            let (reasons, suggestions) = if offending.is_empty() {
                (
                    vec!["insufficient supporting facets".to_string()],
                    vec![format!(
                        "gather more evidence about: {}",
                        grammar::join_facets(attributes)
                    )],
                )
            } else {
                (
                    offending.iter().cloned().collect(),
                    offending
                        .iter()
                        .map(|f| format!("remove or flip facet '{f}'"))
                        .collect(),
                )
            };
            Ok(AgentResult::Judged {
                pass: false,
                reasons,
                suggestions,
            })
        }
        AgentPayload::Reflect {
            user,
            like_facets,
            dislike_facets,
        } => {
            world.user(user)?;
            let conflict_facets: BTreeSet<String> = like_facets
                .intersection(dislike_facets)
                .cloned()
                .collect();
            let user_queries = conflict_facets
                .iter()
                .map(|f| format!("Does the user like or dislike '{f}'?"))
                .collect();
            Ok(AgentResult::Reflected {
                conflict_facets,
                user_queries,
            })
        }
    }
}

impl Backend for OracleBackend<'_> {
    fn complete(&self, req: &AgentRequest) -> Result<AgentResponse> {
        let result = oracle_result(self.world, &req.payload)?;
        let raw_text = grammar::render(&result);
        Ok(AgentResponse {
            result,
            raw_text,
            backend: BackendKind::Oracle,
            retry_count: 0,
        })
    }

    fn identity(&self) -> String {
        format!("oracle:{}", self.world.seed)
    }
}
