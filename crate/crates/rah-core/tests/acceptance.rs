//! Acceptance suite: ten criteria covering alignment exactness and
//! orderings, proxy-feedback lift, bias mitigation, metric and numeric
//! oracles, debias mechanics, structural invariants, end-to-end
//! determinism, and the scripted case studies. Each test prints a single
//! PASS line; a failure panics with the offending numbers.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use rah_core::agents::{reflect, CandidateTraits};
use rah_core::alignment::{learn_one, learn_set, LoopConfig, WorldResponder};
use rah_core::debias::{
    augment_unpopular, estimate_propensity, ips_weights, item_counts,
    sample_unbiased_test_with_counts,
};
use rah_core::domain::{
    Action, DomainTag, Interaction, InteractionId, Item, ItemId, Personality, Source, SplitSet,
    UserId,
};
use rah_core::experiments::e2::{e2_proxy, Arm};
use rah_core::experiments::e3::{e3_bias, E3Arm, E3Params};
use rah_core::experiments::{control, e1_alignment, runner, ExperimentConfig, Scope, Variant};
use rah_core::gateway::OracleBackend;
use rah_core::pipeline::{kcore_filter, make_world, split_lpu, WorldConfig};
use rah_core::recsys::{
    self, evaluate, grad_check, FitConfig, MfModel, Model, ModelKind, RecDataset,
};

fn pass(criterion: usize, message: &str) {
    println!("ACCEPTANCE {criterion} PASS — {message}");
}

/// The criterion-1/2 alignment world: one tag per item, dense coverage so
/// every liked tag appears in each domain slice of the Learn Set.
fn alignment_world(noise_rate: f64, seed: u64) -> WorldConfig {
    WorldConfig {
        users: 50,
        items: 300,
        tags: 4,
        tags_per_item: 1,
        liked_tags_per_user: 1,
        disliked_tags_per_user: 1,
        interactions_per_user: 0, // full catalog
        noise_rate,
        seed,
        ..Default::default()
    }
}

struct AlignmentRun {
    world: rah_core::gateway::SyntheticWorld,
    interactions: Vec<Interaction>,
    split: rah_core::domain::SplitAssignment,
}

fn alignment_run(config: &WorldConfig, split_seed: u64) -> AlignmentRun {
    let (world, interactions) = make_world(config).unwrap();
    let split = split_lpu(&interactions, split_seed).unwrap();
    AlignmentRun {
        world,
        interactions,
        split,
    }
}

fn e1(run: &AlignmentRun, variants: &[Variant], scopes: &[Scope]) -> rah_core::experiments::F1Report {
    let data = rah_core::experiments::WorldData {
        catalog: &run.world.catalog,
        interactions: &run.interactions,
        split: &run.split,
    };
    let backend = OracleBackend::new(&run.world);
    let responder = WorldResponder::new(&run.world);
    e1_alignment(&data, variants, scopes, 3, &backend, Some(&responder)).unwrap()
}

fn single_scopes() -> Vec<Scope> {
    DomainTag::standard().into_iter().map(Scope::Single).collect()
}

#[test]
fn criterion_01_alignment_exactness() {
    // Noise-free: macro-F1 exactly 1.0 in every single-domain scope.
    let run = alignment_run(&alignment_world(0.0, 0), 0);
    let report = e1(&run, &[Variant::LCR], &single_scopes());
    for row in &report.rows {
        assert_eq!(
            row.f1,
            1.0,
            "noise-free L+C+R must be exact in scope {}",
            row.scope.label()
        );
    }

    // noise 0.1: mean over 5 seeds >= 0.8.
    let mut total = 0.0;
    let mut n = 0usize;
    for seed in 0..5 {
        let run = alignment_run(&alignment_world(0.1, seed), seed);
        for row in &e1(&run, &[Variant::LCR], &single_scopes()).rows {
            total += row.f1;
            n += 1;
        }
    }
    let mean = total / n as f64;
    assert!(mean >= 0.8, "noisy L+C+R mean F1 {mean} < 0.8");
    pass(1, &format!("noise-free F1 = 1.0 exactly; noisy mean F1 = {mean:.4} >= 0.8"));
}

#[test]
fn criterion_02_variant_and_scope_orderings() {
    // 5 seeds at noise 0.1 on a scarce-exposure world: each user sees 36
    // of 300 items, so single-domain Learn Sets are small and the mixed
    // scope's extra cross-domain evidence matters.
    let world = |seed| WorldConfig {
        interactions_per_user: 36,
        ..alignment_world(0.1, seed)
    };
    let mut scopes = single_scopes();
    scopes.push(Scope::Mixed);
    let mut sums: BTreeMap<(Variant, String), (f64, usize)> = BTreeMap::new();
    for seed in 0..5 {
        let run = alignment_run(&world(seed), seed);
        let report = e1(&run, &Variant::all(), &scopes);
        for row in &report.rows {
            let entry = sums.entry((row.variant, row.scope.label())).or_insert((0.0, 0));
            entry.0 += row.f1;
            entry.1 += 1;
        }
    }
    let mean = |variant: Variant, scope: &str| -> f64 {
        let (total, n) = sums[&(variant, scope.to_string())];
        total / n as f64
    };

    let slack = 0.01;
    for scope in scopes.iter().map(Scope::label) {
        let l = mean(Variant::L, &scope);
        let lr = mean(Variant::LR, &scope);
        let lc = mean(Variant::LC, &scope);
        let lcr = mean(Variant::LCR, &scope);
        assert!(lcr >= lc - slack, "{scope}: L+C+R {lcr} < L+C {lc} - {slack}");
        assert!(lc >= l - slack, "{scope}: L+C {lc} < L {l} - {slack}");
        assert!(lcr >= lr - slack, "{scope}: L+C+R {lcr} < L+R {lr} - {slack}");
        assert!(lr >= l - slack, "{scope}: L+R {lr} < L {l} - {slack}");
    }
    // Mixed scope holds up against each single-domain scope.
    for variant in Variant::all() {
        let mixed = mean(variant, "mixed");
        for scope in single_scopes().iter().map(Scope::label) {
            let single = mean(variant, &scope);
            assert!(
                mixed >= single - 0.02,
                "{}: mixed {mixed} < {scope} {single} - 0.02",
                variant.as_str()
            );
        }
    }
    pass(2, "F1(L+C+R) >= F1(L+C) >= F1(L), F1(L+C+R) >= F1(L+R) >= F1(L), mixed >= single - 0.02");
}

fn e2_world(seed: u64) -> (rah_core::gateway::SyntheticWorld, Vec<Interaction>) {
    make_world(&WorldConfig {
        users: 24,
        items: 96,
        tags: 4,
        tags_per_item: 1,
        liked_tags_per_user: 1,
        disliked_tags_per_user: 1,
        interactions_per_user: 30,
        like_bias: 0.7,
        noise_rate: 0.05,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn criterion_03_proxy_feedback_improves_recommenders() {
    let models = ModelKind::all();
    let fit = FitConfig {
        dim: 16,
        epochs: 20,
        ..Default::default()
    };
    let mut ndcg: BTreeMap<(ModelKind, Arm), f64> = BTreeMap::new();
    let seeds = 5u64;
    for seed in 0..seeds {
        let (world, interactions) = e2_world(seed);
        let split = split_lpu(&interactions, seed).unwrap();
        let data = rah_core::experiments::WorldData {
            catalog: &world.catalog,
            interactions: &interactions,
            split: &split,
        };
        let backend = OracleBackend::new(&world);
        let responder = WorldResponder::new(&world);
        let report = e2_proxy(
            &data,
            &models,
            &fit,
            &LoopConfig::default(),
            8,
            &backend,
            Some(&responder),
            seed,
        )
        .unwrap();
        for row in &report.rows {
            *ndcg.entry((row.model, row.arm)).or_default() += row.ndcg / seeds as f64;
        }
    }

    let mut strict_order_holds = 0usize;
    for model in models {
        let none = ndcg[&(model, Arm::None)];
        let random = ndcg[&(model, Arm::Random)];
        let assistant = ndcg[&(model, Arm::Assistant)];
        assert!(
            assistant >= none,
            "{}: assistant {assistant} < none {none}",
            model.as_str()
        );
        if assistant >= random && random >= none {
            strict_order_holds += 1;
        }
    }
    assert!(
        strict_order_holds >= 3,
        "assistant >= random >= none held for only {strict_order_holds}/4 models"
    );
    pass(
        3,
        &format!("assistant >= none for all 4 models; full ordering held for {strict_order_holds}/4"),
    );
}

fn e3_world(seed: u64) -> (rah_core::gateway::SyntheticWorld, Vec<Interaction>) {
    make_world(&WorldConfig {
        users: 24,
        items: 120,
        tags: 4,
        tags_per_item: 1,
        liked_tags_per_user: 1,
        disliked_tags_per_user: 1,
        interactions_per_user: 30,
        zipf_exponent: 1.0,
        noise_rate: 0.0,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn criterion_04_bias_mitigation_orderings() {
    let params = E3Params {
        fit: FitConfig {
            dim: 16,
            epochs: 20,
            ..Default::default()
        },
        loop_config: LoopConfig::default(),
        gamma: 1.0,
        clip: 0.05,
        threshold: 6,
        test_size: 100,
    };
    let seeds = 5u64;
    let mut mean: BTreeMap<E3Arm, f64> = BTreeMap::new();
    for seed in 0..seeds {
        let (world, interactions) = e3_world(seed);
        let split = split_lpu(&interactions, seed).unwrap();
        let data = rah_core::experiments::WorldData {
            catalog: &world.catalog,
            interactions: &interactions,
            split: &split,
        };
        let backend = OracleBackend::new(&world);
        let responder = WorldResponder::new(&world);
        let report = e3_bias(&data, &params, &backend, Some(&responder), seed).unwrap();
        for row in &report.rows {
            *mean.entry(row.arm).or_default() += row.ndcg / seeds as f64;
        }
    }
    let base = mean[&E3Arm::Base];
    let ips = mean[&E3Arm::Ips];
    let rah = mean[&E3Arm::Rah];
    let both = mean[&E3Arm::IpsRah];
    assert!(base < ips, "MF {base} !< MF+IPS {ips}");
    assert!(base < rah, "MF {base} !< MF+RAH {rah}");
    assert!(
        both >= ips.max(rah),
        "MF+IPS+RAH {both} < max(MF+IPS {ips}, MF+RAH {rah})"
    );

    // Degeneracy: gamma = 0 and no augmentation collapse all arms exactly.
    let degenerate = E3Params {
        gamma: 0.0,
        threshold: 0,
        fit: FitConfig {
            dim: 16,
            epochs: 20,
            ..Default::default()
        },
        loop_config: LoopConfig::default(),
        clip: 0.05,
        test_size: 100,
    };
    let (world, interactions) = e3_world(0);
    let split = split_lpu(&interactions, 0).unwrap();
    let data = rah_core::experiments::WorldData {
        catalog: &world.catalog,
        interactions: &interactions,
        split: &split,
    };
    let backend = OracleBackend::new(&world);
    let responder = WorldResponder::new(&world);
    let report = e3_bias(&data, &degenerate, &backend, Some(&responder), 0).unwrap();
    for row in &report.rows {
        assert_eq!(row.ndcg, report.rows[0].ndcg, "degenerate arm {} diverged", row.arm.as_str());
        assert_eq!(row.recall, report.rows[0].recall);
    }
    pass(
        4,
        &format!("MF {base:.4} < MF+IPS {ips:.4}, MF < MF+RAH {rah:.4}, combined {both:.4} >= both; gamma=0 degeneracy exact"),
    );
}

/// Bias-only MF over a ladder of items with strictly decreasing scores, so
/// the eventual ranking is the item-index order.
fn ladder(n_items: usize) -> (RecDataset, Model, Vec<ItemId>) {
    let user = UserId::new("u0");
    let mut catalog = BTreeMap::new();
    let mut ids = Vec::new();
    for i in 0..n_items {
        let id = ItemId::new(format!("c{i:02}"));
        ids.push(id.clone());
        catalog.insert(
            id.clone(),
            Item {
                id,
                domain: DomainTag::movie(),
                title: format!("item {i}"),
                description: String::new(),
                tags: BTreeSet::new(),
            },
        );
    }
    // One training positive on a sacrificial item excluded from ranking.
    let z = ItemId::new("z");
    catalog.insert(
        z.clone(),
        Item {
            id: z.clone(),
            domain: DomainTag::movie(),
            title: "train".into(),
            description: String::new(),
            tags: BTreeSet::new(),
        },
    );
    let train = vec![Interaction {
        id: InteractionId::new("t0"),
        user: user.clone(),
        item: z.clone(),
        action: Action::Like,
        rating: None,
        comment: None,
        timestamp: 0,
        source: Source::Human,
    }];
    let dataset = RecDataset::from_interactions(&train, &catalog).unwrap();
    let n = dataset.items.len();
    let item_bias: Vec<f64> = dataset
        .items
        .iter()
        .map(|id| {
            if id == &z {
                -100.0
            } else {
                // c00 highest, descending with index.
                let rank: usize = id.as_str()[1..].parse().unwrap();
                -(rank as f64)
            }
        })
        .collect();
    let model = Model::Mf(MfModel::from_parts(
        0.0,
        &[0.0],
        &item_bias,
        &[vec![]],
        &vec![vec![]; n],
    ));
    (dataset, model, ids)
}

fn test_interaction(n: usize, item: &ItemId) -> Interaction {
    Interaction {
        id: InteractionId::new(format!("e{n}")),
        user: UserId::new("u0"),
        item: item.clone(),
        action: Action::Like,
        rating: None,
        comment: None,
        timestamp: 0,
        source: Source::Human,
    }
}

#[test]
fn criterion_05_metric_oracles() {
    let (dataset, model, ids) = ladder(15);
    let candidates: Vec<ItemId> = dataset.items.clone();
    let eval = |relevant: &[usize]| {
        let test: Vec<Interaction> = relevant
            .iter()
            .enumerate()
            .map(|(n, &i)| test_interaction(n, &ids[i]))
            .collect();
        evaluate(&model, &dataset, &test, &candidates).unwrap()
    };

    // Single relevant at rank 1.
    let r = eval(&[0]);
    assert!((r.ndcg - 1.0).abs() <= 1e-9, "rank-1 NDCG {}", r.ndcg);
    assert!((r.recall - 1.0).abs() <= 1e-9, "rank-1 recall {}", r.recall);
    // Single relevant at rank 3: 1/log2(4) = 0.5.
    let r = eval(&[2]);
    assert!((r.ndcg - 0.5).abs() <= 1e-9, "rank-3 NDCG {}", r.ndcg);
    // Five relevant, two inside the top 10: recall 0.4.
    let r = eval(&[0, 1, 11, 12, 13]);
    assert!((r.recall - 0.4).abs() <= 1e-9, "2-of-5 recall {}", r.recall);

    // Property: metrics of 1,000 random rankings stay in [0, 1].
    let mut rankings = 0usize;
    let mut seed = 0u64;
    while rankings < 1000 {
        let (world, interactions) = make_world(&WorldConfig {
            users: 10,
            items: 40,
            tags: 4,
            liked_tags_per_user: 1,
            disliked_tags_per_user: 1,
            interactions_per_user: 12,
            noise_rate: 0.3,
            seed,
            ..Default::default()
        })
        .unwrap();
        seed += 1;
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
        let model = recsys::fit(ModelKind::Popularity, &dataset, &FitConfig::default()).unwrap();
        let report = evaluate(&model, &dataset, &test, &candidates).unwrap();
        for &(ndcg, recall) in report.per_user.values() {
            assert!((0.0..=1.0).contains(&ndcg), "NDCG {ndcg} out of range");
            assert!((0.0..=1.0).contains(&recall), "recall {recall} out of range");
            rankings += 1;
        }
    }
    pass(5, &format!("unit cases exact to 1e-9; {rankings} random rankings stayed in [0, 1]"));
}

#[test]
fn criterion_06_numerical_checks() {
    let (world, interactions) = make_world(&WorldConfig {
        users: 20,
        items: 30,
        tags: 4,
        liked_tags_per_user: 1,
        disliked_tags_per_user: 1,
        interactions_per_user: 12,
        noise_rate: 0.1,
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let dataset = RecDataset::from_interactions(&interactions, &world.catalog).unwrap();
    let config = FitConfig {
        dim: 6,
        ..Default::default()
    };

    let mf_err = grad_check(ModelKind::Mf, &dataset, &config, 1e-5, 100, 13).unwrap();
    assert!(mf_err <= 1e-4, "MF gradient relative error {mf_err}");
    let fm_err = grad_check(ModelKind::Fm, &dataset, &config, 1e-5, 100, 13).unwrap();
    assert!(fm_err <= 1e-4, "FM gradient relative error {fm_err}");

    // FM factorized pairwise identity against the brute-force double loop.
    let fm = match recsys::fit(ModelKind::Fm, &dataset, &config).unwrap() {
        Model::Fm(m) => m,
        _ => unreachable!(),
    };
    for user in 0..dataset.users.len() {
        for item in 0..dataset.items.len() {
            let fast = fm.pairwise_factorized(user, item);
            let slow = fm.pairwise_brute_force(user, item);
            assert!(
                (fast - slow).abs() <= 1e-10,
                "pairwise mismatch at ({user}, {item}): {fast} vs {slow}"
            );
        }
    }

    // Monotone training loss on a 20x30 dataset.
    let slow_fit = FitConfig {
        dim: 6,
        learning_rate: 0.01,
        epochs: 50,
        ..Default::default()
    };
    let model = recsys::fit(ModelKind::Mf, &dataset, &slow_fit).unwrap();
    let history = model.loss_history();
    assert_eq!(history.len(), 50);
    for w in history.windows(2) {
        assert!(
            w[1] <= w[0] + 1e-6,
            "loss increased: {} -> {}",
            w[0],
            w[1]
        );
    }
    pass(
        6,
        &format!("gradient errors MF {mf_err:.2e}, FM {fm_err:.2e} <= 1e-4; pairwise identity to 1e-10; loss monotone over 50 epochs"),
    );
}

#[test]
fn criterion_07_debias_mechanics() {
    // Power-of-two frequency ratios make the IPS identity exact in floats.
    let items: Vec<ItemId> = (0..5).map(|i| ItemId::new(format!("i{i}"))).collect();
    let mut interactions = Vec::new();
    let mut n = 0;
    for (idx, copies) in [(0usize, 8usize), (1, 4), (2, 2), (3, 1)] {
        for _ in 0..copies {
            interactions.push(test_interaction(n, &items[idx]));
            n += 1;
        }
    }
    let table = estimate_propensity(&interactions, items.iter(), 1.0, 0.01).unwrap();
    let weights = ips_weights(&table);
    for (id, p) in &table.propensities {
        assert_eq!(weights[id] * p, 1.0, "IPS identity violated for {id}");
        assert!(weights[id] <= 100.0, "weight {} exceeds clip bound", weights[id]);
    }
    // i4 never occurs: propensity clipped at 0.01, weight exactly 100.
    assert_eq!(weights[&items[4]], 100.0);

    // Unbiased sampler: two interactions on items with counts 8 and 2;
    // inclusion of the rare one at size 1 is analytically 0.8.
    let rare = test_interaction(900, &items[2]);
    let common = test_interaction(901, &items[0]);
    let counts: BTreeMap<ItemId, usize> = [(items[0].clone(), 8), (items[2].clone(), 2)].into();
    let pool = vec![common, rare.clone()];
    let mut hits = 0usize;
    let draws = 10_000u64;
    for seed in 0..draws {
        let sample = sample_unbiased_test_with_counts(&pool, &counts, 1, seed).unwrap();
        if sample[0].item == rare.item {
            hits += 1;
        }
    }
    let freq = hits as f64 / draws as f64;
    assert!(
        (freq - 0.8).abs() <= 0.02,
        "rare-item inclusion {freq} not within 0.02 of 0.8"
    );

    // Augmentation leaves every catalog item with >= threshold reviews.
    let (world, interactions) = e3_world(2);
    let split = split_lpu(&interactions, 2).unwrap();
    let backend = OracleBackend::new(&world);
    let responder = WorldResponder::new(&world);
    let mut train: Vec<Interaction> = Vec::new();
    let mut assistants: BTreeMap<UserId, Personality> = BTreeMap::new();
    let mut learn_by_user: BTreeMap<UserId, Vec<Interaction>> = BTreeMap::new();
    for inter in &interactions {
        match split.assignment[&inter.id] {
            SplitSet::Unseen => {}
            set => {
                train.push(inter.clone());
                if set == SplitSet::Learn {
                    learn_by_user.entry(inter.user.clone()).or_default().push(inter.clone());
                }
            }
        }
    }
    for (user, list) in &learn_by_user {
        assistants.insert(
            user.clone(),
            learn_set(user, list, &world.catalog, &LoopConfig::default(), &backend, Some(&responder))
                .unwrap(),
        );
    }
    let threshold = 6;
    let extra = augment_unpopular(&world.catalog, &train, &assistants, threshold, 2, &backend).unwrap();
    let mut counts = item_counts(&train);
    for inter in &extra {
        *counts.entry(inter.item.clone()).or_default() += 1;
    }
    for id in world.catalog.keys() {
        let c = counts.get(id).copied().unwrap_or(0);
        assert!(c >= threshold, "item {id} still has {c} < {threshold} reviews");
    }
    pass(
        7,
        &format!("IPS identity exact, weights <= 100; sampler frequency {freq:.4} within 0.02 of 0.8; augmentation reached the threshold"),
    );
}

#[test]
fn criterion_08_structural_invariants() {
    // Loop bound over 10,000 oracle interactions.
    let (world, interactions) = make_world(&WorldConfig {
        users: 100,
        items: 100,
        tags: 5,
        liked_tags_per_user: 2,
        disliked_tags_per_user: 2,
        interactions_per_user: 100,
        noise_rate: 0.2,
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(interactions.len(), 10_000);
    let backend = OracleBackend::new(&world);
    let responder = WorldResponder::new(&world);
    let config = LoopConfig::default();
    let mut personalities: BTreeMap<UserId, Personality> = BTreeMap::new();
    for inter in &interactions {
        let personality = personalities
            .entry(inter.user.clone())
            .or_insert_with(|| Personality::empty(inter.user.clone()));
        let (updated, trace) = learn_one(
            &world.catalog[&inter.item],
            inter,
            personality,
            &config,
            &backend,
            Some(&responder),
        )
        .unwrap();
        assert!(trace.iterations.len() <= config.max_iters);
        *personality = updated;
    }

    // Reflect idempotence and no dual-polarity facets on random personalities.
    let mut rng = ChaCha12Rng::seed_from_u64(23);
    let reflect_world = rah_core::gateway::SyntheticWorld {
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
    let reflect_backend = OracleBackend::new(&reflect_world);
    let empty = CandidateTraits {
        user: UserId::new("u"),
        new_likes: Vec::new(),
        new_dislikes: Vec::new(),
        why_like: String::new(),
        why_dislike: String::new(),
    };
    for case in 0..200 {
        let mut p = Personality::empty(UserId::new("u"));
        for e in 0..rng.gen_range(0..8) {
            let polarity = if rng.gen_bool(0.5) { Action::Like } else { Action::Dislike };
            let facets: BTreeSet<String> = (0..rng.gen_range(1..4))
                .map(|_| format!("f{}", rng.gen_range(0..6)))
                .collect();
            p.push_entry(polarity, facets, [InteractionId::new(format!("c{case}e{e}"))].into());
        }
        let once = reflect(&p, &empty, &reflect_backend).unwrap();
        assert!(once.merged.is_reflected());
        let twice = reflect(&once.merged, &empty, &reflect_backend).unwrap();
        assert_eq!(twice.merged, once.merged);
    }

    // Split partition on randomized users.
    let mut rng = ChaCha12Rng::seed_from_u64(29);
    for case in 0..100 {
        let interactions: Vec<Interaction> = (0..rng.gen_range(1..80))
            .map(|n| Interaction {
                id: InteractionId::new(format!("s{case}n{n}")),
                user: UserId::new(format!("u{}", rng.gen_range(0..9))),
                item: ItemId::new(format!("i{}", rng.gen_range(0..15))),
                action: Action::Like,
                rating: None,
                comment: None,
                timestamp: n,
                source: Source::Human,
            })
            .collect();
        let split = split_lpu(&interactions, case).unwrap();
        assert_eq!(split.assignment.len(), interactions.len());
        let mut per_user: BTreeMap<UserId, [usize; 3]> = BTreeMap::new();
        for inter in &interactions {
            let slot = match split.assignment[&inter.id] {
                SplitSet::Learn => 0,
                SplitSet::Proxy => 1,
                SplitSet::Unseen => 2,
            };
            per_user.entry(inter.user.clone()).or_default()[slot] += 1;
        }
        for [l, p, u] in per_user.values() {
            assert!(l >= p && p >= u && l - u <= 1, "bad split sizes {l}/{p}/{u}");
        }
    }

    // k-core vs brute-force fixed point on 100 random bipartite graphs.
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    for case in 0..100 {
        let interactions: Vec<Interaction> = (0..rng.gen_range(1..60))
            .map(|n| Interaction {
                id: InteractionId::new(format!("k{case}n{n}")),
                user: UserId::new(format!("u{}", rng.gen_range(0..8))),
                item: ItemId::new(format!("i{}", rng.gen_range(0..12))),
                action: Action::Like,
                rating: None,
                comment: None,
                timestamp: n,
                source: Source::Human,
            })
            .collect();
        let k = rng.gen_range(1..4);
        let fast = kcore_filter(&interactions, k).unwrap();
        // Brute force: drop under-degree rows until nothing changes.
        let mut kept = interactions.clone();
        loop {
            let mut users: BTreeMap<UserId, usize> = BTreeMap::new();
            let mut items: BTreeMap<ItemId, usize> = BTreeMap::new();
            for i in &kept {
                *users.entry(i.user.clone()).or_default() += 1;
                *items.entry(i.item.clone()).or_default() += 1;
            }
            let next: Vec<Interaction> = kept
                .iter()
                .filter(|i| users[&i.user] >= k && items[&i.item] >= k)
                .cloned()
                .collect();
            if next.len() == kept.len() {
                break;
            }
            kept = next;
        }
        assert_eq!(fast, kept, "k-core mismatch on case {case} (k={k})");
    }
    pass(8, "loop bound on 10,000 interactions; reflect idempotent; split partitions; k-core matches brute force on 100 graphs");
}

#[test]
fn criterion_09_end_to_end_determinism() {
    let config = ExperimentConfig {
        seeds: vec![3],
        world: WorldConfig {
            users: 12,
            items: 60,
            tags: 4,
            liked_tags_per_user: 1,
            disliked_tags_per_user: 1,
            interactions_per_user: 24,
            noise_rate: 0.05,
            zipf_exponent: 1.0,
            ..Default::default()
        },
        fit: FitConfig {
            dim: 8,
            epochs: 10,
            ..Default::default()
        },
        background_users: 4,
        unpopular_threshold: 5,
        test_size: 40,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let first = runner::run_to_dir(&config, &dir.path().join("a")).unwrap();
    let second = runner::run_to_dir(&config, &dir.path().join("b")).unwrap();
    assert_eq!(first, second);
    for file in ["e1.csv", "e2.csv", "e3.csv", "summary.txt"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    pass(9, "two identical runs produced byte-identical e1/e2/e3 reports");
}

#[test]
fn criterion_10_case_studies() {
    let scenarios = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");

    let scenario = control::parse_scenario_file(&scenarios.join("control.scn")).unwrap();
    let log = control::run_scenario(&scenario).unwrap();
    assert!(log.contains("decision: coco -> PassToUser"), "{log}");
    assert!(log.contains("decision: ironman -> PassAndObserve"), "{log}");
    assert!(log.contains("decision: batman -> ProxyDislike"), "{log}");

    for name in ["privacy-psychologist.scn", "privacy-shared-account.scn"] {
        let scenario = control::parse_scenario_file(&scenarios.join(name)).unwrap();
        let log = control::run_scenario(&scenario).unwrap();
        assert!(log.contains("obfuscation-sound: true"), "{name}: {log}");
    }
    pass(10, "control decisions {PassToUser, PassAndObserve, ProxyDislike}; both obfuscation strategies sound");
}
