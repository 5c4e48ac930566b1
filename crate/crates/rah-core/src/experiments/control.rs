//! Scripted case studies: recommendation-result control (assistant
//! filtering with explicit exclusions) and privacy control (obfuscation
//! strategies plus side-effect filtering), replayed deterministically on
//! an oracle world built from the scenario file.
//!
//! Scenario format (line-oriented, `#` comments):
//!
//! ```text
//! #rah-scenario v1
//! kind: control
//! user: alice
//! like: family, animation
//! dislike: horror
//! exclude: dark
//! candidate: coco | movie | family, animation
//! ```
//!
//! Privacy scenarios use `strategy:`, `seed:`, `extra:`, one `trigger:`
//! item line and `item:` catalog lines instead of `exclude`/`candidate`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::alignment::{
    filter_recommendations, obfuscate, IntentRules, ObfuscationConfig, ObfuscationStrategy,
};
use crate::domain::{
    Action, DomainTag, Interaction, InteractionId, Item, ItemId, Personality, Source, UserId,
};
use crate::error::{RahError, Result};
use crate::gateway::{OracleBackend, SyntheticWorld, WorldUser};

const SCENARIO_MAGIC: &str = "#rah-scenario v1";

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Control {
        user: UserId,
        likes: Vec<BTreeSet<String>>,
        dislikes: Vec<BTreeSet<String>>,
        exclude: BTreeSet<String>,
        candidates: Vec<Item>,
    },
    Privacy {
        user: UserId,
        likes: Vec<BTreeSet<String>>,
        strategy: ObfuscationStrategy,
        seed: u64,
        extra: usize,
        trigger: Item,
        catalog_items: Vec<Item>,
    },
}

fn parse_err(line: usize, msg: impl Into<String>) -> RahError {
    RahError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_facets(value: &str) -> BTreeSet<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// `id | domain | tag, tag` item lines.
fn parse_item(line: usize, value: &str) -> Result<Item> {
    let parts: Vec<&str> = value.split('|').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(parse_err(line, format!("expected id | domain | tags, got {value:?}")));
    }
    let tags = parse_facets(parts[2]);
    if tags.is_empty() {
        return Err(parse_err(line, format!("item {} has no tags", parts[0])));
    }
    Ok(Item {
        id: ItemId::new(parts[0]),
        domain: DomainTag::new(parts[1]).map_err(|e| parse_err(line, e.to_string()))?,
        title: format!("scenario item {}", parts[0]),
        description: String::new(),
        tags,
    })
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == SCENARIO_MAGIC => {}
        _ => return Err(parse_err(1, "missing scenario header")),
    }

    let mut kind: Option<String> = None;
    let mut user: Option<UserId> = None;
    let mut likes: Vec<BTreeSet<String>> = Vec::new();
    let mut dislikes: Vec<BTreeSet<String>> = Vec::new();
    let mut exclude = BTreeSet::new();
    let mut candidates = Vec::new();
    let mut strategy: Option<ObfuscationStrategy> = None;
    let mut seed = 0u64;
    let mut extra: Option<usize> = None;
    let mut trigger: Option<Item> = None;
    let mut catalog_items = Vec::new();

    for (n, raw) in lines {
        let n = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| parse_err(n, format!("expected key: value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "kind" => kind = Some(value.to_string()),
            "user" => user = Some(UserId::new(value)),
            "like" => likes.push(parse_facets(value)),
            "dislike" => dislikes.push(parse_facets(value)),
            "exclude" => exclude.extend(parse_facets(value)),
            "candidate" => candidates.push(parse_item(n, value)?),
            "strategy" => {
                strategy = Some(match value {
                    "psychologist" => ObfuscationStrategy::Psychologist,
                    "shared-account" => ObfuscationStrategy::SharedAccount,
                    other => return Err(parse_err(n, format!("unknown strategy {other:?}"))),
                })
            }
            "seed" => {
                seed = value
                    .parse()
                    .map_err(|_| parse_err(n, format!("invalid seed {value:?}")))?
            }
            "extra" => {
                extra = Some(
                    value
                        .parse()
                        .map_err(|_| parse_err(n, format!("invalid extra count {value:?}")))?,
                )
            }
            "trigger" => trigger = Some(parse_item(n, value)?),
            "item" => catalog_items.push(parse_item(n, value)?),
            other => return Err(parse_err(n, format!("unknown key {other:?}"))),
        }
    }

    let user = user.ok_or_else(|| parse_err(1, "scenario missing user"))?;
    match kind.as_deref() {
        Some("control") => {
            if candidates.is_empty() {
                return Err(parse_err(1, "control scenario has no candidates"));
            }
            Ok(Scenario::Control {
                user,
                likes,
                dislikes,
                exclude,
                candidates,
            })
        }
        Some("privacy") => Ok(Scenario::Privacy {
            user,
            likes,
            strategy: strategy.ok_or_else(|| parse_err(1, "privacy scenario missing strategy"))?,
            seed,
            extra: extra.unwrap_or(5),
            trigger: trigger.ok_or_else(|| parse_err(1, "privacy scenario missing trigger"))?,
            catalog_items,
        }),
        Some(other) => Err(parse_err(1, format!("unknown scenario kind {other:?}"))),
        None => Err(parse_err(1, "scenario missing kind")),
    }
}

pub fn parse_scenario_file(path: &Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

fn personality_from(user: &UserId, likes: &[BTreeSet<String>], dislikes: &[BTreeSet<String>]) -> Personality {
    let mut p = Personality::empty(user.clone());
    let provenance: BTreeSet<InteractionId> = [InteractionId::new("scenario")].into();
    for facets in likes {
        p.push_entry(Action::Like, facets.clone(), provenance.clone());
    }
    for facets in dislikes {
        p.push_entry(Action::Dislike, facets.clone(), provenance.clone());
    }
    p
}

fn scenario_world(user: &UserId, likes: &[BTreeSet<String>], dislikes: &[BTreeSet<String>], items: &[Item]) -> SyntheticWorld {
    let liked_tags: BTreeSet<String> = likes.iter().flatten().cloned().collect();
    let disliked_tags: BTreeSet<String> = dislikes
        .iter()
        .flatten()
        .filter(|t| !liked_tags.contains(*t))
        .cloned()
        .collect();
    SyntheticWorld {
        catalog: items.iter().map(|i| (i.id.clone(), i.clone())).collect(),
        users: [(
            user.clone(),
            WorldUser {
                liked_tags,
                disliked_tags,
                noise_rate: 0.0,
            },
        )]
        .into(),
        seed: 0,
    }
}

/// Assistant-side re-rank score against the real personality: liked-facet
/// overlap minus disliked-facet overlap.
fn personality_score(item: &Item, personality: &Personality) -> i64 {
    let likes = personality.facets(Action::Like);
    let dislikes = personality.facets(Action::Dislike);
    item.tags.intersection(&likes).count() as i64 - item.tags.intersection(&dislikes).count() as i64
}

/// Replays a result-control scenario; returns the deterministic event log.
pub fn run_control_scenario(scenario: &Scenario) -> Result<String> {
    let (user, likes, dislikes, exclude, candidates) = match scenario {
        Scenario::Control {
            user,
            likes,
            dislikes,
            exclude,
            candidates,
        } => (user, likes, dislikes, exclude, candidates),
        _ => return Err(RahError::Config("not a control scenario".into())),
    };
    let world = scenario_world(user, likes, dislikes, candidates);
    let backend = OracleBackend::new(&world);
    let personality = personality_from(user, likes, dislikes);
    let rules = IntentRules {
        exclude_facets: exclude.clone(),
        sensitive_facets: BTreeSet::new(),
    };
    let refs: Vec<&Item> = candidates.iter().collect();
    let forward = filter_recommendations(user, &personality, &rules, &refs, &backend)?;

    let mut log = String::new();
    writeln!(log, "scenario: control user={user}").expect("string write");
    for item in candidates {
        writeln!(
            log,
            "decision: {} -> {}",
            item.id,
            forward.decisions[&item.id].as_str()
        )
        .expect("string write");
    }
    for proxy in &forward.proxy_feedback {
        writeln!(
            log,
            "proxy-feedback: {} {} on {}",
            proxy.id,
            proxy.action.as_str(),
            proxy.item
        )
        .expect("string write");
    }
    Ok(log)
}

/// The scenario recommender: any non-trigger item sharing a tag with a
/// Liked feedback item is a candidate (Dislikes never remove candidates,
/// so obfuscation can only add items, which the filter rules then hide).
fn recsys_candidates<'a>(
    catalog: &'a BTreeMap<ItemId, Item>,
    feedback: &[Interaction],
    trigger: &ItemId,
) -> Vec<&'a Item> {
    let liked_tags: BTreeSet<&String> = feedback
        .iter()
        .filter(|f| f.action == Action::Like)
        .filter_map(|f| catalog.get(&f.item))
        .flat_map(|i| i.tags.iter())
        .collect();
    catalog
        .values()
        .filter(|i| i.id != *trigger)
        .filter(|i| i.tags.iter().any(|t| liked_tags.contains(t)))
        .collect()
}

fn rank_visible<'a>(candidates: &[&'a Item], personality: &Personality, k: usize) -> Vec<&'a Item> {
    let mut scored: Vec<(&Item, i64)> = candidates
        .iter()
        .map(|i| (*i, personality_score(i, personality)))
        .collect();
    scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.id.cmp(&b.0.id)));
    scored.into_iter().take(k).map(|(i, _)| i).collect()
}

/// Replays a privacy scenario: builds the obfuscation plan, simulates the
/// recommender with and without the extra feedback, applies the filter
/// rules, and checks that the user-visible list is unchanged.
pub fn run_privacy_scenario(scenario: &Scenario) -> Result<String> {
    let (user, likes, strategy, seed, extra, trigger, catalog_items) = match scenario {
        Scenario::Privacy {
            user,
            likes,
            strategy,
            seed,
            extra,
            trigger,
            catalog_items,
        } => (user, likes, strategy, *seed, *extra, trigger, catalog_items),
        _ => return Err(RahError::Config("not a privacy scenario".into())),
    };
    let mut catalog: BTreeMap<ItemId, Item> = catalog_items
        .iter()
        .map(|i| (i.id.clone(), i.clone()))
        .collect();
    catalog.insert(trigger.id.clone(), trigger.clone());

    let trigger_interaction = Interaction {
        id: InteractionId::new(format!("trigger:{user}:{}", trigger.id)),
        user: user.clone(),
        item: trigger.id.clone(),
        action: Action::Like,
        rating: None,
        comment: None,
        timestamp: 0,
        source: Source::Human,
    };
    let config = ObfuscationConfig {
        professional_likes: extra,
        shared_interactions: extra,
    };
    let plan = obfuscate(user, &trigger_interaction, *strategy, &catalog, &config, seed)?;

    let personality = personality_from(user, likes, &[]);
    let real_likes = personality.facets(Action::Like);

    let baseline_feedback = vec![trigger_interaction.clone()];
    let mut obf_feedback = baseline_feedback.clone();
    obf_feedback.extend(plan.extra_feedback.iter().cloned());

    let visible_baseline = rank_visible(
        &recsys_candidates(&catalog, &baseline_feedback, &trigger.id),
        &personality,
        10,
    );
    let obf_candidates = recsys_candidates(&catalog, &obf_feedback, &trigger.id);
    let filtered = plan.apply_filters(&obf_candidates, &real_likes);
    let visible_obfuscated = rank_visible(&filtered, &personality, 10);

    let mut log = String::new();
    writeln!(
        log,
        "scenario: privacy user={user} strategy={} seed={seed}",
        plan.strategy.as_str()
    )
    .expect("string write");
    for fb in &plan.extra_feedback {
        writeln!(
            log,
            "extra-feedback: {} {} on {} source={:?}",
            fb.id,
            fb.action.as_str(),
            fb.item,
            fb.source
        )
        .expect("string write");
    }
    for rule in &plan.filter_rules {
        writeln!(
            log,
            "filter-rule: exclude tags [{}]",
            rule.exclude_tags.iter().cloned().collect::<Vec<_>>().join(", ")
        )
        .expect("string write");
    }
    let fmt_list = |items: &[&Item]| {
        items
            .iter()
            .map(|i| i.id.as_str().to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    writeln!(log, "visible-without-obfuscation: [{}]", fmt_list(&visible_baseline))
        .expect("string write");
    writeln!(log, "visible-with-obfuscation: [{}]", fmt_list(&visible_obfuscated))
        .expect("string write");
    let sound = visible_baseline
        .iter()
        .map(|i| &i.id)
        .eq(visible_obfuscated.iter().map(|i| &i.id));
    writeln!(log, "obfuscation-sound: {sound}").expect("string write");
    if !sound {
        return Err(RahError::Run(
            "obfuscation changed the user-visible list".into(),
        ));
    }
    Ok(log)
}

pub fn run_scenario(scenario: &Scenario) -> Result<String> {
    match scenario {
        Scenario::Control { .. } => run_control_scenario(scenario),
        Scenario::Privacy { .. } => run_privacy_scenario(scenario),
    }
}
