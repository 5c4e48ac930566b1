//! E2: does assistant proxy feedback on the Proxy Set improve recommender
//! quality on the Unseen Set, against a no-feedback arm and a random
//! coin-flip arm over the identical item list?

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::{learn_set, proxy_actions, LoopConfig, QueryResponder};
use crate::domain::{
    Action, Interaction, InteractionId, Item, Personality, Source, SplitSet, UserId,
};
use crate::error::{RahError, Result};
use crate::gateway::Backend;
use crate::recsys::{self, FitConfig, ModelKind, RecDataset};

use super::WorldData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    None,
    Random,
    Assistant,
}

impl Arm {
    pub fn all() -> [Arm; 3] {
        [Arm::None, Arm::Random, Arm::Assistant]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::None => "none",
            Arm::Random => "random",
            Arm::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2Row {
    pub model: ModelKind,
    pub arm: Arm,
    pub ndcg: f64,
    pub recall: f64,
    /// Metric minus the none-arm metric for the same model.
    pub ndcg_delta: f64,
    pub recall_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2Report {
    pub rows: Vec<E2Row>,
    /// Hash of the arm-independent inputs (base train set, test set,
    /// proxy item lists): arms provably differ only in added feedback.
    pub shared_input_hash: String,
}

impl E2Report {
    pub fn row(&self, model: ModelKind, arm: Arm) -> Option<&E2Row> {
        self.rows.iter().find(|r| r.model == model && r.arm == arm)
    }
}

fn user_subseed(seed: u64, user: &UserId) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(user.as_str().as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Runs all three arms for every requested model. The first
/// `background_users` users (in id order) contribute their whole history
/// as a stable training corpus; the remaining target users contribute
/// their Learn Set, and the arms differ only in feedback added for the
/// target users' Proxy-Set items.
pub fn e2_proxy(
    data: &WorldData,
    models: &[ModelKind],
    fit_config: &FitConfig,
    loop_config: &LoopConfig,
    background_users: usize,
    backend: &dyn Backend,
    responder: Option<&dyn QueryResponder>,
    seed: u64,
) -> Result<E2Report> {
    let mut users: Vec<&UserId> = data
        .interactions
        .iter()
        .map(|i| &i.user)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    users.sort();
    if background_users >= users.len() {
        return Err(RahError::Config(format!(
            "{background_users} background users leave no targets of {}",
            users.len()
        )));
    }
    let background: std::collections::BTreeSet<&UserId> =
        users.iter().take(background_users).copied().collect();

    // Base train: background history + target Learn Sets.
    let mut base_train: Vec<Interaction> = Vec::new();
    let mut test: Vec<Interaction> = Vec::new();
    let mut learn_by_user: BTreeMap<&UserId, Vec<Interaction>> = BTreeMap::new();
    let mut proxy_items_by_user: BTreeMap<&UserId, Vec<&Item>> = BTreeMap::new();
    for inter in data.interactions {
        if background.contains(&inter.user) {
            base_train.push(inter.clone());
            continue;
        }
        match data.set_of(inter)? {
            SplitSet::Learn => {
                base_train.push(inter.clone());
                learn_by_user.entry(&inter.user).or_default().push(inter.clone());
            }
            SplitSet::Proxy => {
                let item = data
                    .catalog
                    .get(&inter.item)
                    .ok_or_else(|| RahError::Lookup(format!("unknown item {}", inter.item)))?;
                proxy_items_by_user.entry(&inter.user).or_default().push(item);
            }
            SplitSet::Unseen => test.push(inter.clone()),
        }
    }

    let shared_input_hash = {
        let mut hasher = Sha256::new();
        for inter in &base_train {
            hasher.update(inter.id.as_str().as_bytes());
        }
        hasher.update(b"|test|");
        for inter in &test {
            hasher.update(inter.id.as_str().as_bytes());
        }
        hasher.update(b"|proxy|");
        for (user, items) in &proxy_items_by_user {
            hasher.update(user.as_str().as_bytes());
            for item in items {
                hasher.update(item.id.as_str().as_bytes());
            }
        }
        hex::encode(&hasher.finalize()[..6])
    };

    // Assistant feedback: personalities from the Learn Set, then proxy
    // actions over the user's Proxy-Set items.
    let mut assistant_feedback: Vec<Interaction> = Vec::new();
    for (user, items) in &proxy_items_by_user {
        let learn = learn_by_user.get(user).cloned().unwrap_or_default();
        let personality: Personality =
            learn_set(user, &learn, data.catalog, loop_config, backend, responder)?;
        assistant_feedback.extend(proxy_actions(user, &personality, items, backend)?);
    }

    // Random baseline: seeded coin flips over the identical item lists.
    let mut random_feedback: Vec<Interaction> = Vec::new();
    for (user, items) in &proxy_items_by_user {
        let mut rng = ChaCha12Rng::seed_from_u64(user_subseed(seed, user));
        for item in items {
            let action = if rng.gen_bool(0.5) { Action::Like } else { Action::Dislike };
            random_feedback.push(Interaction {
                id: InteractionId::new(format!("rand:{user}:{}", item.id)),
                user: (*user).clone(),
                item: item.id.clone(),
                action,
                rating: None,
                comment: None,
                timestamp: 0,
                source: Source::RandomBaseline,
            });
        }
    }

    let candidates: Vec<_> = data.catalog.keys().cloned().collect();
    let mut rows = Vec::new();
    for &model_kind in models {
        let mut arm_metrics: BTreeMap<Arm, (f64, f64)> = BTreeMap::new();
        for arm in Arm::all() {
            let mut train = base_train.clone();
            match arm {
                Arm::None => {}
                Arm::Random => train.extend(random_feedback.iter().cloned()),
                Arm::Assistant => train.extend(assistant_feedback.iter().cloned()),
            }
            let dataset = RecDataset::from_interactions(&train, data.catalog)?;
            let model = recsys::fit(model_kind, &dataset, fit_config)?;
            let report = recsys::evaluate(&model, &dataset, &test, &candidates)?;
            arm_metrics.insert(arm, (report.ndcg, report.recall));
        }
        let (none_ndcg, none_recall) = arm_metrics[&Arm::None];
        for arm in Arm::all() {
            let (ndcg, recall) = arm_metrics[&arm];
            rows.push(E2Row {
                model: model_kind,
                arm,
                ndcg,
                recall,
                ndcg_delta: ndcg - none_ndcg,
                recall_delta: recall - none_recall,
            });
        }
    }
    Ok(E2Report {
        rows,
        shared_input_hash,
    })
}
