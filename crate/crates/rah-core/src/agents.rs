//! The five assistant agents as typed operations over the gateway:
//! Perceive, Learn, Act, Critic, Reflect.
//!
//! Agents never perform I/O directly and never consult ground truth except
//! where the contract says so (Critic receives the actual action; Act does
//! not).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{
    trait_statement, Action, Interaction, Item, Personality, TraitEntry, UserId,
};
use crate::error::{RahError, Result};
use crate::gateway::{
    AgentPayload, AgentRequest, AgentResult, Backend, Confidence,
};

/// Output of the Perceive agent: enriched description plus attribute tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceivedItem {
    pub item: Item,
    pub description: String,
    pub attributes: BTreeSet<String>,
}

/// Output of the Learn agent: candidate trait entries plus the two "why"
/// answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateTraits {
    pub user: UserId,
    pub new_likes: Vec<TraitEntry>,
    pub new_dislikes: Vec<TraitEntry>,
    pub why_like: String,
    pub why_dislike: String,
}

impl CandidateTraits {
    pub fn is_empty(&self) -> bool {
        self.new_likes.is_empty() && self.new_dislikes.is_empty()
    }

    pub fn facets(&self, polarity: Action) -> BTreeSet<String> {
        let entries = match polarity {
            Action::Like => &self.new_likes,
            Action::Dislike => &self.new_dislikes,
        };
        entries.iter().flat_map(|e| e.facets.iter().cloned()).collect()
    }
}

/// Output of the Act agent. All four chain stages are mandatory; the chain
/// is not skippable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActOutcome {
    pub hypothesized_reasons: String,
    pub perception_analysis: String,
    pub simulated_comment: String,
    pub predicted: Action,
    pub confidence: Confidence,
}

/// Output of the Critic agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub mismatch: Option<(Action, Action)>,
    pub reasons: Vec<String>,
    pub suggestions: Vec<String>,
}

impl Verdict {
    pub fn validate(&self) -> Result<()> {
        if self.pass != self.mismatch.is_none() {
            return Err(RahError::Validation(
                "verdict pass flag inconsistent with mismatch".into(),
            ));
        }
        if !self.pass && self.reasons.is_empty() {
            return Err(RahError::Validation(
                "failing verdict must carry reasons".into(),
            ));
        }
        Ok(())
    }
}

/// Output of the Reflect agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectResult {
    pub merged: Personality,
    pub duplicates_removed: usize,
    pub conflicts_resolved: usize,
    /// Facets dropped for appearing under both polarities; the queries
    /// below ask the user to settle each one.
    pub conflict_facets: BTreeSet<String>,
    pub user_queries: Vec<String>,
}

/// Enriches an item with a description and a nonempty attribute set.
/// Idempotent under the oracle.
pub fn perceive(item: &Item, backend: &dyn Backend) -> Result<PerceivedItem> {
    if item.title.is_empty() {
        return Err(RahError::Validation(format!(
            "item {} has no title",
            item.id
        )));
    }
    let resp = backend.complete(&AgentRequest::new(AgentPayload::Perceive {
        item: item.id.clone(),
        domain: item.domain.clone(),
        title: item.title.clone(),
        tags: item.tags.clone(),
    }))?;
    match resp.result {
        AgentResult::Perceived {
            description,
            attributes,
        } => {
            if attributes.is_empty() {
                return Err(RahError::Validation(format!(
                    "perceive produced no attributes for item {}",
                    item.id
                )));
            }
            Ok(PerceivedItem {
                item: item.clone(),
                description,
                attributes,
            })
        }
        other => Err(RahError::MalformedResponse(format!(
            "expected Perceived result, got {other:?}"
        ))),
    }
}

/// Facet names flagged by a failing critique. Reasons that are not facet
/// names (canned sentences) simply match nothing downstream.
fn flagged_facets(critique: Option<&Verdict>) -> BTreeSet<String> {
    critique
        .map(|v| v.reasons.iter().cloned().collect())
        .unwrap_or_default()
}

/// Extracts candidate traits from one interaction. Every produced entry
/// carries exactly the triggering interaction id as provenance.
pub fn learn(
    perceived: &PerceivedItem,
    interaction: &Interaction,
    personality: &Personality,
    critique: Option<&Verdict>,
    backend: &dyn Backend,
) -> Result<CandidateTraits> {
    if let Some(v) = critique {
        if v.pass {
            return Err(RahError::Validation(
                "learn critique must be a failing verdict".into(),
            ));
        }
    }
    let resp = backend.complete(&AgentRequest::new(AgentPayload::Learn {
        user: interaction.user.clone(),
        item: perceived.item.id.clone(),
        title: perceived.item.title.clone(),
        attributes: perceived.attributes.clone(),
        action: interaction.action,
        rating: interaction.rating,
        comment: interaction.comment.clone(),
        interaction: interaction.id.clone(),
        like_statements: personality
            .entries
            .iter()
            .filter(|e| e.polarity == Action::Like)
            .map(|e| e.statement.clone())
            .collect(),
        dislike_statements: personality
            .entries
            .iter()
            .filter(|e| e.polarity == Action::Dislike)
            .map(|e| e.statement.clone())
            .collect(),
        flagged_facets: flagged_facets(critique),
    }))?;
    match resp.result {
        AgentResult::Learned {
            likes,
            dislikes,
            why_like,
            why_dislike,
        } => {
            let provenance: BTreeSet<_> = [interaction.id.clone()].into();
            let entry = |polarity: Action, facets: BTreeSet<String>| TraitEntry {
                polarity,
                statement: trait_statement(polarity, &facets),
                facets,
                provenance: provenance.clone(),
                created_at: 0, // assigned when appended to a personality
            };
            Ok(CandidateTraits {
                user: interaction.user.clone(),
                new_likes: if likes.is_empty() {
                    Vec::new()
                } else {
                    vec![entry(Action::Like, likes)]
                },
                new_dislikes: if dislikes.is_empty() {
                    Vec::new()
                } else {
                    vec![entry(Action::Dislike, dislikes)]
                },
                why_like,
                why_dislike,
            })
        }
        other => Err(RahError::MalformedResponse(format!(
            "expected Learned result, got {other:?}"
        ))),
    }
}

/// Predicts the user's reaction to an item from a personality. The actual
/// action is deliberately not a parameter.
pub fn act(
    perceived: &PerceivedItem,
    personality: &Personality,
    backend: &dyn Backend,
) -> Result<ActOutcome> {
    let resp = backend.complete(&AgentRequest::new(AgentPayload::Act {
        user: personality.user.clone(),
        item: perceived.item.id.clone(),
        title: perceived.item.title.clone(),
        description: perceived.description.clone(),
        attributes: perceived.attributes.clone(),
        like_facets: personality.facets(Action::Like),
        dislike_facets: personality.facets(Action::Dislike),
    }))?;
    match resp.result {
        AgentResult::Acted {
            hypothesized_reasons,
            perception_analysis,
            simulated_comment,
            confidence,
            predicted,
        } => Ok(ActOutcome {
            hypothesized_reasons,
            perception_analysis,
            simulated_comment,
            predicted,
            confidence,
        }),
        other => Err(RahError::MalformedResponse(format!(
            "expected Acted result, got {other:?}"
        ))),
    }
}

/// Judges an Act prediction against the ground-truth action and, on
/// failure, names the offending facets for the Learn retry.
pub fn critic(
    outcome: &ActOutcome,
    actual: Action,
    perceived: &PerceivedItem,
    personality: &Personality,
    backend: &dyn Backend,
) -> Result<Verdict> {
    let resp = backend.complete(&AgentRequest::new(AgentPayload::Critic {
        user: personality.user.clone(),
        item: perceived.item.id.clone(),
        attributes: perceived.attributes.clone(),
        predicted: outcome.predicted,
        actual,
        like_facets: personality.facets(Action::Like),
        dislike_facets: personality.facets(Action::Dislike),
    }))?;
    match resp.result {
        AgentResult::Judged {
            pass,
            reasons,
            suggestions,
        } => {
            let verdict = Verdict {
                pass,
                mismatch: if pass {
                    None
                } else {
                    Some((outcome.predicted, actual))
                },
                reasons,
                suggestions,
            };
            verdict.validate()?;
            Ok(verdict)
        }
        other => Err(RahError::MalformedResponse(format!(
            "expected Judged result, got {other:?}"
        ))),
    }
}

/// Merges fresh candidate traits into an existing personality: duplicates
/// are unioned, facets under both polarities are removed from both and
/// surfaced as user queries.
pub fn reflect(
    existing: &Personality,
    fresh: &CandidateTraits,
    backend: &dyn Backend,
) -> Result<ReflectResult> {
    if existing.user != fresh.user {
        return Err(RahError::Validation(format!(
            "reflect across users: {} vs {}",
            existing.user, fresh.user
        )));
    }

    let mut combined = existing.clone();
    for entry in fresh.new_likes.iter().chain(fresh.new_dislikes.iter()) {
        combined.push_entry(
            entry.polarity,
            entry.facets.clone(),
            entry.provenance.clone(),
        );
    }

    let resp = backend.complete(&AgentRequest::new(AgentPayload::Reflect {
        user: existing.user.clone(),
        like_facets: combined.facets(Action::Like),
        dislike_facets: combined.facets(Action::Dislike),
    }))?;
    let (conflict_facets, user_queries) = match resp.result {
        AgentResult::Reflected {
            conflict_facets,
            user_queries,
        } => (conflict_facets, user_queries),
        other => {
            return Err(RahError::MalformedResponse(format!(
                "expected Reflected result, got {other:?}"
            )))
        }
    };

    // Drop conflicting facets from every entry and rebuild statements.
    let mut entries: Vec<TraitEntry> = Vec::new();
    for mut entry in combined.entries {
        entry.facets = entry
            .facets
            .difference(&conflict_facets)
            .cloned()
            .collect();
        if entry.facets.is_empty() {
            continue;
        }
        entry.statement = trait_statement(entry.polarity, &entry.facets);
        entries.push(entry);
    }

    // Union-merge duplicates by (polarity, statement), keeping the earliest
    // entry and folding in provenance.
    let mut duplicates_removed = 0usize;
    let mut merged_entries: Vec<TraitEntry> = Vec::new();
    for entry in entries {
        if let Some(existing_entry) = merged_entries
            .iter_mut()
            .find(|e| e.polarity == entry.polarity && e.statement == entry.statement)
        {
            existing_entry
                .provenance
                .extend(entry.provenance.iter().cloned());
            duplicates_removed += 1;
        } else {
            merged_entries.push(entry);
        }
    }

    let merged = Personality {
        user: combined.user,
        entries: merged_entries,
        next_created_at: combined.next_created_at,
    };
    debug_assert!(merged.is_reflected());

    Ok(ReflectResult {
        merged,
        duplicates_removed,
        conflicts_resolved: conflict_facets.len(),
        conflict_facets,
        user_queries,
    })
}
