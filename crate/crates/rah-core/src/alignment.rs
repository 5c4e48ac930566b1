//! Orchestrates the Learn-Act-Critic loop, reflection cadence, proxy
//! feedback generation and the user-control / privacy behaviors.
//!
//! Per-user pipelines are independent; within a user, `learn_one` calls are
//! strictly sequential (the personality is single-writer).

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{self, ActOutcome, CandidateTraits, Verdict};
use crate::domain::{
    Action, Interaction, InteractionId, Item, ItemId, Personality, Source, UserId,
};
use crate::error::{RahError, Result};
use crate::gateway::{Backend, Confidence, SyntheticWorld};

/// Loop configuration. The four (use_critic, use_reflect) combinations are
/// exactly the L / L+R / L+C / L+C+R alignment variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_iters: usize,
    pub use_critic: bool,
    pub use_reflect: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iters: 3,
            use_critic: true,
            use_reflect: true,
        }
    }
}

impl LoopConfig {
    pub fn learn_only() -> Self {
        LoopConfig {
            max_iters: 3,
            use_critic: false,
            use_reflect: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(RahError::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// One pass through the loop body. `outcome`/`verdict` are absent when the
/// critic is disabled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopIteration {
    pub candidate: CandidateTraits,
    pub outcome: Option<ActOutcome>,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub iterations: Vec<LoopIteration>,
    pub accepted: CandidateTraits,
    pub converged: bool,
}

/// Answers reflect queries about a conflicted facet. `None` means the user
/// is indifferent and the facet stays dropped.
pub trait QueryResponder {
    fn resolve(&self, user: &UserId, facet: &str) -> Option<Action>;
}

/// Synthetic human answering from ground-truth tag preferences.
pub struct WorldResponder<'w> {
    world: &'w SyntheticWorld,
}

impl<'w> WorldResponder<'w> {
    pub fn new(world: &'w SyntheticWorld) -> Self {
        WorldResponder { world }
    }
}

impl QueryResponder for WorldResponder<'_> {
    fn resolve(&self, user: &UserId, facet: &str) -> Option<Action> {
        self.world.tag_preference(user, facet).ok().flatten()
    }
}

fn personality_from_candidate(user: &UserId, candidate: &CandidateTraits) -> Personality {
    let mut p = Personality::empty(user.clone());
    for entry in candidate.new_likes.iter().chain(candidate.new_dislikes.iter()) {
        p.push_entry(entry.polarity, entry.facets.clone(), entry.provenance.clone());
    }
    p
}

/// Incorporates one interaction into the user's personality.
///
/// With the critic enabled, learn -> act -> critic iterates up to
/// `max_iters`, feeding each failing verdict into the next learn; the first
/// passing candidate is accepted, otherwise the last one with
/// `converged = false`. With reflection enabled the accepted candidate is
/// merged through the Reflect agent (and conflicts surfaced as queries may
/// be answered by `responder`); otherwise entries are appended verbatim.
pub fn learn_one(
    item: &Item,
    interaction: &Interaction,
    personality: &Personality,
    config: &LoopConfig,
    backend: &dyn Backend,
    responder: Option<&dyn QueryResponder>,
) -> Result<(Personality, LoopTrace)> {
    config.validate()?;
    if interaction.user != personality.user {
        return Err(RahError::Validation(format!(
            "interaction {} does not belong to user {}",
            interaction.id, personality.user
        )));
    }

    let perceived = agents::perceive(item, backend)?;
    let mut iterations = Vec::new();
    let mut critique: Option<Verdict> = None;
    let mut accepted: Option<CandidateTraits> = None;
    let mut converged = false;

    for _ in 0..config.max_iters {
        let candidate =
            agents::learn(&perceived, interaction, personality, critique.as_ref(), backend)?;
        if !config.use_critic {
            iterations.push(LoopIteration {
                candidate: candidate.clone(),
                outcome: None,
                verdict: None,
            });
            accepted = Some(candidate);
            converged = true;
            break;
        }
        // The act agent validates the candidate in reverse: can it
        // reproduce the user's actual action from the new traits alone?
        let candidate_personality = personality_from_candidate(&interaction.user, &candidate);
        let outcome = agents::act(&perceived, &candidate_personality, backend)?;
        let verdict = agents::critic(
            &outcome,
            interaction.action,
            &perceived,
            &candidate_personality,
            backend,
        )?;
        let pass = verdict.pass;
        iterations.push(LoopIteration {
            candidate: candidate.clone(),
            outcome: Some(outcome),
            verdict: Some(verdict.clone()),
        });
        if pass {
            accepted = Some(candidate);
            converged = true;
            break;
        }
        critique = Some(verdict);
        accepted = Some(candidate);
    }

    let accepted = accepted.expect("max_iters >= 1 guarantees one iteration");
    let trace = LoopTrace {
        iterations,
        accepted: accepted.clone(),
        converged,
    };

    let updated = if config.use_reflect {
        // Facet -> provenance map before the merge, so answered queries can
        // keep their interaction provenance.
        let mut facet_prov: BTreeMap<String, BTreeSet<InteractionId>> = BTreeMap::new();
        for entry in personality
            .entries
            .iter()
            .chain(accepted.new_likes.iter())
            .chain(accepted.new_dislikes.iter())
        {
            for facet in &entry.facets {
                facet_prov
                    .entry(facet.clone())
                    .or_default()
                    .extend(entry.provenance.iter().cloned());
            }
        }
        let reflected = agents::reflect(personality, &accepted, backend)?;
        let mut merged = reflected.merged;
        if let Some(responder) = responder {
            for facet in &reflected.conflict_facets {
                if let Some(polarity) = responder.resolve(&interaction.user, facet) {
                    let provenance = facet_prov
                        .get(facet)
                        .cloned()
                        .unwrap_or_else(|| [interaction.id.clone()].into());
                    merged.push_entry(polarity, [facet.clone()].into(), provenance);
                }
            }
        }
        merged
    } else {
        let mut p = personality.clone();
        for entry in accepted.new_likes.iter().chain(accepted.new_dislikes.iter()) {
            p.push_entry(entry.polarity, entry.facets.clone(), entry.provenance.clone());
        }
        p
    };

    Ok((updated, trace))
}

/// Folds `learn_one` over a user's Learn Set in timestamp order.
/// Per-interaction failures are logged and skipped; more than 50% failures
/// abort the run.
pub fn learn_set(
    user: &UserId,
    interactions: &[Interaction],
    catalog: &BTreeMap<ItemId, Item>,
    config: &LoopConfig,
    backend: &dyn Backend,
    responder: Option<&dyn QueryResponder>,
) -> Result<Personality> {
    let mut ordered: Vec<&Interaction> = interactions.iter().collect();
    ordered.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));

    let mut personality = Personality::empty(user.clone());
    let mut failures = 0usize;
    for interaction in &ordered {
        if interaction.user != *user {
            return Err(RahError::Validation(format!(
                "interaction {} does not belong to user {user}",
                interaction.id
            )));
        }
        let item = match catalog.get(&interaction.item) {
            Some(item) => item,
            None => {
                log::warn!("skipping {}: unknown item {}", interaction.id, interaction.item);
                failures += 1;
                continue;
            }
        };
        match learn_one(item, interaction, &personality, config, backend, responder) {
            Ok((updated, _)) => personality = updated,
            Err(e) => {
                log::warn!("skipping {}: {e}", interaction.id);
                failures += 1;
            }
        }
    }
    if !ordered.is_empty() && failures * 2 > ordered.len() {
        return Err(RahError::Run(format!(
            "{failures} of {} interactions failed for user {user}",
            ordered.len()
        )));
    }
    Ok(personality)
}

/// Generates one proxy interaction per item with the Act agent's predicted
/// action. Read-only on the personality; never consults ground truth.
pub fn proxy_actions(
    user: &UserId,
    personality: &Personality,
    items: &[&Item],
    backend: &dyn Backend,
) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    for item in items {
        let outcome = match agents::perceive(item, backend)
            .and_then(|p| agents::act(&p, personality, backend))
        {
            Ok(o) => o,
            Err(e) => {
                log::warn!("proxy skip item {}: {e}", item.id);
                continue;
            }
        };
        out.push(Interaction {
            id: InteractionId::new(format!("proxy:{user}:{}", item.id)),
            user: user.clone(),
            item: item.id.clone(),
            action: outcome.predicted,
            rating: None,
            comment: Some(outcome.simulated_comment),
            timestamp: 0,
            source: Source::AssistantProxy,
        });
    }
    Ok(out)
}

/// What the assistant does with one recommended item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    PassToUser,
    PassAndObserve,
    ProxyDislike,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::PassToUser => "PassToUser",
            Decision::PassAndObserve => "PassAndObserve",
            Decision::ProxyDislike => "ProxyDislike",
        }
    }
}

/// Per-candidate decisions plus the proxy Dislikes emitted on the user's
/// behalf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardDecision {
    pub decisions: BTreeMap<ItemId, Decision>,
    pub proxy_feedback: Vec<Interaction>,
}

/// Explicit user instructions for recommendation control.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentRules {
    pub exclude_facets: BTreeSet<String>,
    /// Facets whose interactions are privacy-sensitive.
    pub sensitive_facets: BTreeSet<String>,
}

/// Routes each candidate item: exclusions and confident dislikes become
/// proxy Dislikes, confident likes pass through, uncertain items pass with
/// observation.
pub fn filter_recommendations(
    user: &UserId,
    personality: &Personality,
    intent_rules: &IntentRules,
    candidates: &[&Item],
    backend: &dyn Backend,
) -> Result<ForwardDecision> {
    let mut decisions = BTreeMap::new();
    let mut proxy_feedback = Vec::new();
    for item in candidates {
        let perceived = agents::perceive(item, backend)?;
        let excluded = perceived
            .attributes
            .intersection(&intent_rules.exclude_facets)
            .next()
            .is_some();
        let decision = if excluded {
            Decision::ProxyDislike
        } else {
            let outcome = agents::act(&perceived, personality, backend)?;
            match (outcome.predicted, outcome.confidence) {
                (Action::Like, _) => Decision::PassToUser,
                (Action::Dislike, Confidence::Low) => Decision::PassAndObserve,
                (Action::Dislike, Confidence::High) => Decision::ProxyDislike,
            }
        };
        if decision == Decision::ProxyDislike {
            proxy_feedback.push(Interaction {
                id: InteractionId::new(format!("proxy:{user}:{}", item.id)),
                user: user.clone(),
                item: item.id.clone(),
                action: Action::Dislike,
                rating: None,
                comment: None,
                timestamp: 0,
                source: Source::AssistantProxy,
            });
        }
        decisions.insert(item.id.clone(), decision);
    }
    Ok(ForwardDecision {
        decisions,
        proxy_feedback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObfuscationStrategy {
    Psychologist,
    SharedAccount,
}

impl ObfuscationStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            ObfuscationStrategy::Psychologist => "Psychologist",
            ObfuscationStrategy::SharedAccount => "SharedAccount",
        }
    }
}

/// A predicate removing obfuscation-induced recommendations: an item is
/// dropped when it carries an excluded tag and none of the user's real
/// liked facets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRule {
    pub exclude_tags: BTreeSet<String>,
}

impl FilterRule {
    pub fn removes(&self, item: &Item, real_likes: &BTreeSet<String>) -> bool {
        item.tags.intersection(&self.exclude_tags).next().is_some()
            && item.tags.intersection(real_likes).next().is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObfuscationPlan {
    pub strategy: ObfuscationStrategy,
    pub extra_feedback: Vec<Interaction>,
    pub filter_rules: Vec<FilterRule>,
}

impl ObfuscationPlan {
    /// Applies the plan's filter rules to a recommendation list.
    pub fn apply_filters<'a>(
        &self,
        items: &[&'a Item],
        real_likes: &BTreeSet<String>,
    ) -> Vec<&'a Item> {
        items
            .iter()
            .filter(|item| {
                !self
                    .filter_rules
                    .iter()
                    .any(|rule| rule.removes(item, real_likes))
            })
            .copied()
            .collect()
    }
}

/// Defaults for the obfuscation volumes; the strategy descriptions leave
/// them open, so they are configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObfuscationConfig {
    /// Extra Likes for the Psychologist strategy.
    pub professional_likes: usize,
    /// Random interactions for the SharedAccount strategy.
    pub shared_interactions: usize,
}

impl Default for ObfuscationConfig {
    fn default() -> Self {
        ObfuscationConfig {
            professional_likes: 5,
            shared_interactions: 10,
        }
    }
}

/// Tag marking professional-category items, the Psychologist persona pool.
pub const PROFESSIONAL_TAG: &str = "professional";

/// Builds an obfuscation plan masking the trigger interaction.
///
/// Psychologist: extra Likes on professional-category items sharing the
/// trigger's topical facets. SharedAccount: seeded random Likes/Dislikes
/// across domains. Both come with filter rules that hide the induced
/// recommendations from the user.
pub fn obfuscate(
    user: &UserId,
    trigger: &Interaction,
    strategy: ObfuscationStrategy,
    catalog: &BTreeMap<ItemId, Item>,
    config: &ObfuscationConfig,
    seed: u64,
) -> Result<ObfuscationPlan> {
    let trigger_item = catalog.get(&trigger.item).ok_or_else(|| {
        RahError::Lookup(format!("trigger item {} not in catalog", trigger.item))
    })?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut extra_feedback = Vec::new();

    let make = |n: usize, item: &Item, action: Action, ts: i64| Interaction {
        id: InteractionId::new(format!("obf:{user}:{n}")),
        user: user.clone(),
        item: item.id.clone(),
        action,
        rating: None,
        comment: None,
        timestamp: ts,
        source: Source::Obfuscation,
    };

    match strategy {
        ObfuscationStrategy::Psychologist => {
            let mut eligible: Vec<&Item> = catalog
                .values()
                .filter(|item| {
                    item.id != trigger.item
                        && item.tags.contains(PROFESSIONAL_TAG)
                        && item.tags.intersection(&trigger_item.tags).next().is_some()
                })
                .collect();
            if eligible.is_empty() {
                return Err(RahError::Run(format!(
                    "obfuscation strategy {} found no eligible professional items",
                    strategy.as_str()
                )));
            }
            eligible.shuffle(&mut rng);
            for (n, item) in eligible
                .into_iter()
                .take(config.professional_likes)
                .enumerate()
            {
                extra_feedback.push(make(n, item, Action::Like, n as i64));
            }
        }
        ObfuscationStrategy::SharedAccount => {
            let mut pool: Vec<&Item> = catalog
                .values()
                .filter(|item| item.id != trigger.item)
                .collect();
            if pool.is_empty() {
                return Err(RahError::Run(format!(
                    "obfuscation strategy {} found an empty catalog",
                    strategy.as_str()
                )));
            }
            pool.shuffle(&mut rng);
            for (n, item) in pool
                .into_iter()
                .take(config.shared_interactions)
                .enumerate()
            {
                let action = if rng.gen_bool(0.5) {
                    Action::Like
                } else {
                    Action::Dislike
                };
                extra_feedback.push(make(n, item, action, n as i64));
            }
        }
    }

    // Tags introduced by the obfuscation likes, beyond the trigger's own
    // topic: recommendations explained only by these must be hidden.
    let mut exclude_tags: BTreeSet<String> = extra_feedback
        .iter()
        .filter(|i| i.action == Action::Like)
        .filter_map(|i| catalog.get(&i.item))
        .flat_map(|item| item.tags.iter().cloned())
        .collect();
    for tag in &trigger_item.tags {
        exclude_tags.remove(tag);
    }

    Ok(ObfuscationPlan {
        strategy,
        extra_feedback,
        filter_rules: vec![FilterRule { exclude_tags }],
    })
}
