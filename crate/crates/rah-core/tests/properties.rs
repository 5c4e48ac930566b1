//! Property-based invariants: serialization round-trips, metric bounds,
//! reflect idempotence, split partitioning, k-core correctness against a
//! brute-force oracle, and the loop iteration bound.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use rah_core::agents;
use rah_core::alignment::{learn_one, LoopConfig, WorldResponder};
use rah_core::domain::{
    Action, Interaction, InteractionId, ItemId, Personality, Source, SplitSet, UserId,
};
use rah_core::gateway::OracleBackend;
use rah_core::pipeline::{
    kcore_filter, load_interactions, make_world, save_interactions, split_lpu, WorldConfig,
};
use rah_core::recsys::{self, FitConfig, ModelKind, RecDataset};
use rah_core::store;

fn facet_strategy() -> impl Strategy<Value = String> {
    "[a-z]{1,6}"
}

fn facet_set(max: usize) -> impl Strategy<Value = BTreeSet<String>> {
    prop::collection::btree_set(facet_strategy(), 1..=max)
}

fn personality_strategy() -> impl Strategy<Value = Personality> {
    prop::collection::vec((prop::bool::ANY, facet_set(4)), 0..8).prop_map(|entries| {
        let mut p = Personality::empty(UserId::new("u"));
        for (n, (liked, facets)) in entries.into_iter().enumerate() {
            let polarity = if liked { Action::Like } else { Action::Dislike };
            p.push_entry(polarity, facets, [InteractionId::new(format!("x{n}"))].into());
        }
        p
    })
}

/// Small random interaction logs: user/item indices plus action bits.
fn interactions_strategy() -> impl Strategy<Value = Vec<Interaction>> {
    prop::collection::vec((0usize..8, 0usize..12, prop::bool::ANY), 1..60).prop_map(|triples| {
        triples
            .into_iter()
            .enumerate()
            .map(|(n, (u, i, liked))| Interaction {
                id: InteractionId::new(format!("n{n}")),
                user: UserId::new(format!("u{u}")),
                item: ItemId::new(format!("i{i}")),
                action: if liked { Action::Like } else { Action::Dislike },
                rating: None,
                comment: None,
                timestamp: n as i64,
                source: Source::Human,
            })
            .collect()
    })
}

/// Brute-force k-core: repeatedly remove interactions of users/items with
/// fewer than k interactions until nothing changes.
fn kcore_brute_force(interactions: &[Interaction], k: usize) -> Vec<Interaction> {
    let mut kept: Vec<Interaction> = interactions.to_vec();
    loop {
        let mut users: BTreeMap<&UserId, usize> = BTreeMap::new();
        let mut items: BTreeMap<&ItemId, usize> = BTreeMap::new();
        for inter in &kept {
            *users.entry(&inter.user).or_default() += 1;
            *items.entry(&inter.item).or_default() += 1;
        }
        let next: Vec<Interaction> = kept
            .iter()
            .filter(|i| users[&i.user] >= k && items[&i.item] >= k)
            .cloned()
            .collect();
        if next.len() == kept.len() {
            return kept;
        }
        kept = next;
    }
}

proptest! {
    #[test]
    fn personality_file_round_trips(personality in personality_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p");
        store::save(&personality, &path).unwrap();
        prop_assert_eq!(store::load(&path).unwrap(), personality);
    }

    #[test]
    fn interaction_log_round_trips(interactions in interactions_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        save_interactions(&interactions, &path).unwrap();
        prop_assert_eq!(load_interactions(&path).unwrap(), interactions);
    }

    #[test]
    fn reflect_removes_conflicts_and_is_idempotent(personality in personality_strategy()) {
        let world = rah_core::gateway::SyntheticWorld {
            catalog: BTreeMap::new(),
            users: [(
                UserId::new("u"),
                rah_core::gateway::WorldUser {
                    liked_tags: BTreeSet::new(),
                    disliked_tags: BTreeSet::new(),
                    noise_rate: 0.0,
                },
            )]
            .into(),
            seed: 0,
        };
        let backend = OracleBackend::new(&world);
        let empty = agents::CandidateTraits {
            user: UserId::new("u"),
            new_likes: Vec::new(),
            new_dislikes: Vec::new(),
            why_like: String::new(),
            why_dislike: String::new(),
        };
        let once = agents::reflect(&personality, &empty, &backend).unwrap();
        prop_assert!(once.merged.is_reflected());
        let twice = agents::reflect(&once.merged, &empty, &backend).unwrap();
        prop_assert_eq!(&twice.merged, &once.merged);
        prop_assert_eq!(twice.conflicts_resolved, 0);
        prop_assert_eq!(twice.duplicates_removed, 0);
    }

    #[test]
    fn split_partitions_each_user_by_the_remainder_rule(
        interactions in interactions_strategy(),
        seed in 0u64..32,
    ) {
        let split = split_lpu(&interactions, seed).unwrap();
        prop_assert_eq!(split.assignment.len(), interactions.len());
        let mut per_user: BTreeMap<&UserId, BTreeMap<SplitSet, usize>> = BTreeMap::new();
        for inter in &interactions {
            let set = split.assignment[&inter.id];
            *per_user.entry(&inter.user).or_default().entry(set).or_default() += 1;
        }
        for counts in per_user.values() {
            let learn = counts.get(&SplitSet::Learn).copied().unwrap_or(0);
            let proxy = counts.get(&SplitSet::Proxy).copied().unwrap_or(0);
            let unseen = counts.get(&SplitSet::Unseen).copied().unwrap_or(0);
            // Remainders go to Learn first, then Proxy.
            prop_assert!(learn >= proxy && proxy >= unseen && learn - unseen <= 1);
        }
    }

    #[test]
    fn kcore_matches_brute_force(
        interactions in interactions_strategy(),
        k in 1usize..4,
    ) {
        let fast = kcore_filter(&interactions, k).unwrap();
        let slow = kcore_brute_force(&interactions, k);
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn metrics_stay_in_unit_interval(seed in 0u64..64) {
        let (world, interactions) = make_world(&WorldConfig {
            users: 6,
            items: 30,
            tags: 4,
            liked_tags_per_user: 1,
            disliked_tags_per_user: 1,
            interactions_per_user: 10,
            noise_rate: 0.2,
            seed,
            ..Default::default()
        })
        .unwrap();
        let split = split_lpu(&interactions, seed).unwrap();
        let train: Vec<Interaction> = interactions
            .iter()
            .filter(|i| split.assignment[&i.id] != SplitSet::Unseen)
            .cloned()
            .collect();
        let test: Vec<Interaction> = interactions
            .iter()
            .filter(|i| split.assignment[&i.id] == SplitSet::Unseen)
            .cloned()
            .collect();
        let dataset = RecDataset::from_interactions(&train, &world.catalog).unwrap();
        let candidates: Vec<ItemId> = world.catalog.keys().cloned().collect();
        for kind in [ModelKind::Popularity, ModelKind::ItemKnn] {
            let model = recsys::fit(kind, &dataset, &FitConfig::default()).unwrap();
            let report = recsys::evaluate(&model, &dataset, &test, &candidates).unwrap();
            prop_assert!((0.0..=1.0).contains(&report.ndcg));
            prop_assert!((0.0..=1.0).contains(&report.recall));
            for &(ndcg, recall) in report.per_user.values() {
                prop_assert!((0.0..=1.0).contains(&ndcg));
                prop_assert!((0.0..=1.0).contains(&recall));
            }
        }
    }

    #[test]
    fn loop_never_exceeds_max_iters(seed in 0u64..32, max_iters in 1usize..4) {
        let (world, interactions) = make_world(&WorldConfig {
            users: 3,
            items: 12,
            tags: 3,
            liked_tags_per_user: 1,
            disliked_tags_per_user: 1,
            interactions_per_user: 6,
            noise_rate: 0.3, // noise forces critic failures
            seed,
            ..Default::default()
        })
        .unwrap();
        let backend = OracleBackend::new(&world);
        let responder = WorldResponder::new(&world);
        let config = LoopConfig { max_iters, use_critic: true, use_reflect: true };
        let mut personalities: BTreeMap<UserId, Personality> = BTreeMap::new();
        for inter in &interactions {
            let personality = personalities
                .entry(inter.user.clone())
                .or_insert_with(|| Personality::empty(inter.user.clone()));
            let item = &world.catalog[&inter.item];
            let (updated, trace) =
                learn_one(item, inter, personality, &config, &backend, Some(&responder)).unwrap();
            prop_assert!(trace.iterations.len() <= max_iters);
            prop_assert!(!trace.iterations.is_empty());
            *personality = updated;
        }
    }
}
