//! Trainable recommenders (MF, FM, ItemKNN, Popularity) with seeded
//! fitting, full-catalog ranking and NDCG@10 / Recall@10 evaluation.
//!
//! Fitting is single-threaded per model instance for reproducibility.

mod fm;
mod knn;
mod mf;

pub use fm::FmModel;
pub use knn::{KnnModel, PopModel};
pub use mf::MfModel;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Action, DomainTag, Interaction, Item, ItemId, UserId};
use crate::error::{RahError, Result};

/// Ranking cutoff used throughout evaluation.
pub const EVAL_K: usize = 10;

/// One labeled training example over dense indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub user: usize,
    pub item: usize,
    /// 1.0 for Like, 0.0 for Dislike.
    pub label: f64,
    pub weight: f64,
}

/// Dense-index view of an interaction log plus the item catalog.
///
/// Items cover the whole catalog (not just observed items) so full-catalog
/// ranking and domain one-hots are available; users cover everyone who
/// interacted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecDataset {
    pub users: Vec<UserId>,
    pub items: Vec<ItemId>,
    pub domains: Vec<DomainTag>,
    /// Domain index per item, aligned with `items`.
    pub domain_of_item: Vec<usize>,
    pub examples: Vec<Example>,
    user_index: BTreeMap<UserId, usize>,
    item_index: BTreeMap<ItemId, usize>,
}

impl RecDataset {
    pub fn from_interactions(
        interactions: &[Interaction],
        catalog: &BTreeMap<ItemId, Item>,
    ) -> Result<Self> {
        if interactions.is_empty() {
            return Err(RahError::Validation("empty interaction set".into()));
        }
        let mut users: Vec<UserId> = interactions
            .iter()
            .map(|i| i.user.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        users.sort();
        let items: Vec<ItemId> = catalog.keys().cloned().collect();
        let domains: Vec<DomainTag> = catalog
            .values()
            .map(|i| i.domain.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let user_index: BTreeMap<UserId, usize> = users
            .iter()
            .enumerate()
            .map(|(n, u)| (u.clone(), n))
            .collect();
        let item_index: BTreeMap<ItemId, usize> = items
            .iter()
            .enumerate()
            .map(|(n, i)| (i.clone(), n))
            .collect();
        let domain_index: BTreeMap<&DomainTag, usize> =
            domains.iter().enumerate().map(|(n, d)| (d, n)).collect();
        let domain_of_item: Vec<usize> = items
            .iter()
            .map(|id| domain_index[&catalog[id].domain])
            .collect();

        let mut examples = Vec::with_capacity(interactions.len());
        for inter in interactions {
            let item = *item_index.get(&inter.item).ok_or_else(|| {
                RahError::Lookup(format!("interaction item {} not in catalog", inter.item))
            })?;
            examples.push(Example {
                user: user_index[&inter.user],
                item,
                label: if inter.action == Action::Like { 1.0 } else { 0.0 },
                weight: 1.0,
            });
        }
        Ok(RecDataset {
            users,
            items,
            domains,
            domain_of_item,
            examples,
            user_index,
            item_index,
        })
    }

    pub fn user_index(&self, user: &UserId) -> Option<usize> {
        self.user_index.get(user).copied()
    }

    pub fn item_index(&self, item: &ItemId) -> Option<usize> {
        self.item_index.get(item).copied()
    }

    /// Item indices each user has Liked in the training data, for ranking
    /// exclusions and KNN scoring.
    pub fn positives_by_user(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut map: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for ex in &self.examples {
            if ex.label > 0.5 {
                map.entry(ex.user).or_default().insert(ex.item);
            }
        }
        map
    }

    /// Multiplies each example's weight by a per-item factor (IPS).
    pub fn apply_item_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.items.len() {
            return Err(RahError::Validation(format!(
                "weight vector length {} does not match {} items",
                weights.len(),
                self.items.len()
            )));
        }
        for ex in &mut self.examples {
            ex.weight *= weights[ex.item];
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Mf,
    Fm,
    ItemKnn,
    Popularity,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mf => "mf",
            ModelKind::Fm => "fm",
            ModelKind::ItemKnn => "itemknn",
            ModelKind::Popularity => "popularity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mf" => Ok(ModelKind::Mf),
            "fm" => Ok(ModelKind::Fm),
            "itemknn" => Ok(ModelKind::ItemKnn),
            "popularity" => Ok(ModelKind::Popularity),
            other => Err(RahError::Config(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn all() -> [ModelKind; 4] {
        [
            ModelKind::Mf,
            ModelKind::Fm,
            ModelKind::ItemKnn,
            ModelKind::Popularity,
        ]
    }
}

/// Hyperparameters for the gradient-based models; the closed-form models
/// only read `knn_k` and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    /// Sampled unobserved negatives per positive example.
    pub neg_samples: usize,
    /// Weight on sampled negatives, below the explicit-Dislike weight 1.0.
    pub neg_weight: f64,
    pub knn_k: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            dim: 32,
            learning_rate: 0.05,
            l2: 1e-4,
            epochs: 30,
            neg_samples: 4,
            neg_weight: 0.25,
            knn_k: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Mf(MfModel),
    Fm(FmModel),
    ItemKnn(KnnModel),
    Popularity(PopModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mf(_) => ModelKind::Mf,
            Model::Fm(_) => ModelKind::Fm,
            Model::ItemKnn(_) => ModelKind::ItemKnn,
            Model::Popularity(_) => ModelKind::Popularity,
        }
    }

    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        match self {
            Model::Mf(m) => m.score(user, item),
            Model::Fm(m) => m.score(user, item),
            Model::ItemKnn(m) => m.score(user, item),
            Model::Popularity(m) => m.score(user, item),
        }
    }

    /// Per-epoch training objective, for the monotone-loss check. Empty for
    /// the closed-form models.
    pub fn loss_history(&self) -> &[f64] {
        match self {
            Model::Mf(m) => &m.loss_history,
            Model::Fm(m) => &m.loss_history,
            _ => &[],
        }
    }
}

/// Fits a model of the requested kind. Deterministic given the seed.
pub fn fit(kind: ModelKind, dataset: &RecDataset, config: &FitConfig) -> Result<Model> {
    if dataset.examples.is_empty() {
        return Err(RahError::Validation("cannot fit on an empty dataset".into()));
    }
    Ok(match kind {
        ModelKind::Mf => Model::Mf(mf::fit(dataset, config)?),
        ModelKind::Fm => Model::Fm(fm::fit(dataset, config)?),
        ModelKind::ItemKnn => Model::ItemKnn(knn::fit_knn(dataset, config.knn_k)),
        ModelKind::Popularity => Model::Popularity(knn::fit_popularity(dataset)),
    })
}

/// Ranks candidate items for a user: descending score, ties broken by
/// ascending item index; excluded items (train positives) never appear.
pub fn rank(
    model: &Model,
    dataset: &RecDataset,
    user: &UserId,
    candidates: &[ItemId],
    exclude: &BTreeSet<ItemId>,
    k: usize,
) -> Result<Vec<ItemId>> {
    let u = dataset
        .user_index(user)
        .ok_or_else(|| RahError::Lookup(format!("unknown user {user}")))?;
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for id in candidates {
        if exclude.contains(id) {
            continue;
        }
        let i = dataset
            .item_index(id)
            .ok_or_else(|| RahError::Lookup(format!("unknown item {id}")))?;
        scored.push((i, model.score(u, i)?));
    }
    if scored.is_empty() {
        return Err(RahError::Validation(format!(
            "empty candidate set for user {user} after exclusions"
        )));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then(a.0.cmp(&b.0))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, _)| dataset.items[i].clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ndcg: f64,
    pub recall: f64,
    /// Per-user (NDCG@10, Recall@10), in user-id order.
    pub per_user: BTreeMap<UserId, (f64, f64)>,
}

/// Evaluates top-10 ranking quality with binary relevance, macro-averaged
/// over users. Test users without a relevant (Liked) item, or unknown to
/// the training data, are excluded with a warning.
pub fn evaluate(
    model: &Model,
    dataset: &RecDataset,
    test: &[Interaction],
    candidates: &[ItemId],
) -> Result<EvalReport> {
    let mut relevant_by_user: BTreeMap<UserId, BTreeSet<ItemId>> = BTreeMap::new();
    for inter in test {
        if inter.action == Action::Like {
            relevant_by_user
                .entry(inter.user.clone())
                .or_default()
                .insert(inter.item.clone());
        } else {
            relevant_by_user.entry(inter.user.clone()).or_default();
        }
    }

    let positives = dataset.positives_by_user();
    let mut per_user = BTreeMap::new();
    for (user, relevant) in &relevant_by_user {
        if relevant.is_empty() {
            log::warn!("evaluate: user {user} has no relevant test items; excluded");
            continue;
        }
        let u = match dataset.user_index(user) {
            Some(u) => u,
            None => {
                log::warn!("evaluate: user {user} unseen in training; excluded");
                continue;
            }
        };
        let exclude: BTreeSet<ItemId> = positives
            .get(&u)
            .map(|set| set.iter().map(|&i| dataset.items[i].clone()).collect())
            .unwrap_or_default();
        let top = rank(model, dataset, user, candidates, &exclude, EVAL_K)?;
        let mut dcg = 0.0;
        let mut hits = 0usize;
        for (pos, id) in top.iter().enumerate() {
            if relevant.contains(id) {
                dcg += 1.0 / ((pos as f64 + 2.0).log2());
                hits += 1;
            }
        }
        let ideal_slots = relevant.len().min(EVAL_K);
        let idcg: f64 = (0..ideal_slots)
            .map(|pos| 1.0 / ((pos as f64 + 2.0).log2()))
            .sum();
        let ndcg = dcg / idcg;
        let recall = hits as f64 / relevant.len() as f64;
        per_user.insert(user.clone(), (ndcg, recall));
    }
    if per_user.is_empty() {
        return Err(RahError::Validation(
            "no evaluable users in the test set".into(),
        ));
    }
    let n = per_user.len() as f64;
    let ndcg = per_user.values().map(|v| v.0).sum::<f64>() / n;
    let recall = per_user.values().map(|v| v.1).sum::<f64>() / n;
    Ok(EvalReport {
        ndcg,
        recall,
        per_user,
    })
}

/// Compares analytic gradients against central finite differences at
/// seeded random parameter points; returns the max relative error.
pub fn grad_check(
    kind: ModelKind,
    dataset: &RecDataset,
    config: &FitConfig,
    epsilon: f64,
    points: usize,
    seed: u64,
) -> Result<f64> {
    match kind {
        ModelKind::Mf => mf::grad_check(dataset, config, epsilon, points, seed),
        ModelKind::Fm => fm::grad_check(dataset, config, epsilon, points, seed),
        other => Err(RahError::Config(format!(
            "grad_check requires a differentiable model, got {}",
            other.as_str()
        ))),
    }
}

const MODEL_MAGIC: &[u8; 4] = b"RAHM";
const MODEL_VERSION: u32 = 1;

/// Saves the model as a versioned binary file (magic, version, JSON body).
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let body = serde_json::to_vec(model)
        .map_err(|e| RahError::Decode(format!("cannot encode model: {e}")))?;
    let mut bytes = Vec::with_capacity(8 + body.len());
    bytes.extend_from_slice(MODEL_MAGIC);
    bytes.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    bytes.extend_from_slice(&body);
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 || &bytes[..4] != MODEL_MAGIC {
        return Err(RahError::Decode(format!(
            "{}: not a model file",
            path.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("length checked"));
    if version != MODEL_VERSION {
        return Err(RahError::VersionMismatch {
            found: version.to_string(),
            expected: MODEL_VERSION.to_string(),
        });
    }
    serde_json::from_slice(&bytes[8..])
        .map_err(|e| RahError::Decode(format!("{}: {e}", path.display())))
}

/// Shared by MF and FM: numerically stable weighted logistic loss term
/// for a raw score `x` against label `y`.
pub(crate) fn logistic_loss(x: f64, y: f64, w: f64) -> f64 {
    // softplus(x) - y*x, stable for large |x|.
    let softplus = x.max(0.0) + (-x.abs()).exp().ln_1p();
    w * (softplus - y * x)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Appends `neg_samples` unobserved negatives per positive example,
/// sampled once so the training objective is fixed across epochs.
pub(crate) fn with_sampled_negatives(
    dataset: &RecDataset,
    config: &FitConfig,
    rng: &mut impl rand::Rng,
) -> Vec<Example> {
    let positives = dataset.positives_by_user();
    let n_items = dataset.items.len();
    let mut examples = dataset.examples.clone();
    for ex in &dataset.examples {
        if ex.label < 0.5 {
            continue;
        }
        let seen = positives.get(&ex.user);
        for _ in 0..config.neg_samples {
            let mut item = rng.gen_range(0..n_items);
            for _ in 0..100 {
                if seen.map_or(true, |s| !s.contains(&item)) {
                    break;
                }
                item = rng.gen_range(0..n_items);
            }
            examples.push(Example {
                user: ex.user,
                item,
                label: 0.0,
                weight: config.neg_weight,
            });
        }
    }
    examples
}

/// Shared flat-parameter SGD loop with per-epoch objective tracking and
/// divergence detection. `score_and_indices` returns the raw score and the
/// touched parameter indices with their activation coefficients.
pub(crate) fn sgd_fit(
    params: &mut [f64],
    examples: &[Example],
    config: &FitConfig,
    score_fn: &dyn Fn(&[f64], &Example) -> f64,
    step_fn: &dyn Fn(&mut [f64], &Example, f64, f64, f64),
    objective_fn: &dyn Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        for ex in examples {
            let x = score_fn(params, ex);
            let g = ex.weight * (sigmoid(x) - ex.label);
            step_fn(params, ex, g, config.learning_rate, config.l2);
        }
        let loss = objective_fn(params);
        if !loss.is_finite() {
            return Err(RahError::Divergence {
                epoch,
                msg: format!("objective became {loss}"),
            });
        }
        loss_history.push(loss);
    }
    Ok(loss_history)
}

/// Central-finite-difference gradient check over random parameter points;
/// shared by the MF and FM implementations.
pub(crate) fn grad_check_impl(
    n_params: usize,
    examples: &[Example],
    objective: &dyn Fn(&[f64]) -> f64,
    gradient: &dyn Fn(&[f64]) -> Vec<f64>,
    epsilon: f64,
    points: usize,
    seed: u64,
) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let _ = examples;
    let mut max_rel = 0.0f64;
    // Check a handful of coordinates per point; full sweeps are wasteful.
    let coords_per_point = 8.min(n_params);
    for _ in 0..points {
        let mut params: Vec<f64> = (0..n_params).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let analytic = gradient(&params);
        for _ in 0..coords_per_point {
            let c = rng.gen_range(0..n_params);
            let orig = params[c];
            params[c] = orig + epsilon;
            let up = objective(&params);
            params[c] = orig - epsilon;
            let down = objective(&params);
            params[c] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let denom = analytic[c].abs().max(numeric.abs()).max(1.0);
            max_rel = max_rel.max((analytic[c] - numeric).abs() / denom);
        }
    }
    max_rel
}
