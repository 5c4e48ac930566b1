//! Popularity-bias mitigation: frequency-ratio propensity estimation, IPS
//! weighting, unbiased test-set simulation, and proxy augmentation of
//! unpopular items.
//!
//! All functions are pure over immutable inputs; augmentation derives a
//! per-item sub-seed so items can be processed in any order (or in
//! parallel) with identical results.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::proxy_actions;
use crate::domain::{Interaction, Item, ItemId, Personality, UserId};
use crate::error::{RahError, Result};
use crate::gateway::Backend;

/// Per-item propensities in (0, 1], with the estimation config that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityTable {
    pub propensities: BTreeMap<ItemId, f64>,
    pub gamma: f64,
    pub clip: f64,
}

/// Frequency-ratio estimator: p_i = max(clip, (n_i / max_j n_j)^γ).
/// Items in `items` that never occur in `interactions` count as 0.
pub fn estimate_propensity<'a>(
    interactions: &[Interaction],
    items: impl IntoIterator<Item = &'a ItemId>,
    gamma: f64,
    clip: f64,
) -> Result<PropensityTable> {
    if interactions.is_empty() {
        return Err(RahError::Validation(
            "cannot estimate propensities from an empty log".into(),
        ));
    }
    if !(0.0..=1.0).contains(&clip) || clip <= 0.0 {
        return Err(RahError::Config(format!("clip floor {clip} not in (0, 1]")));
    }
    let counts = item_counts(interactions);
    let max_n = counts.values().copied().max().unwrap_or(0) as f64;
    let mut propensities = BTreeMap::new();
    for id in items {
        let n = counts.get(id).copied().unwrap_or(0) as f64;
        let p = (n / max_n).powf(gamma).max(clip);
        propensities.insert(id.clone(), p);
    }
    Ok(PropensityTable {
        propensities,
        gamma,
        clip,
    })
}

/// Inverse-propensity weights, w_i = 1/p_i, so w_i * p_i = 1 exactly.
pub fn ips_weights(table: &PropensityTable) -> BTreeMap<ItemId, f64> {
    table
        .propensities
        .iter()
        .map(|(id, p)| (id.clone(), 1.0 / p))
        .collect()
}

/// Two-column audit export: item id, propensity.
pub fn export_propensities(table: &PropensityTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (id, p) in &table.propensities {
        out.push_str(&format!("{id}\t{p:.6}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn item_counts(interactions: &[Interaction]) -> BTreeMap<ItemId, usize> {
    let mut counts: BTreeMap<ItemId, usize> = BTreeMap::new();
    for inter in interactions {
        *counts.entry(inter.item.clone()).or_default() += 1;
    }
    counts
}

/// Draws `size` interactions without replacement, inclusion weight
/// proportional to 1 / n_{item}: a simulated unbiased test set where
/// popular items no longer dominate. Item frequencies are taken from the
/// pool itself; use [`sample_unbiased_test_with_counts`] when frequencies
/// come from a larger log.
pub fn sample_unbiased_test(
    interactions: &[Interaction],
    size: usize,
    seed: u64,
) -> Result<Vec<Interaction>> {
    let counts = item_counts(interactions);
    sample_unbiased_test_with_counts(interactions, &counts, size, seed)
}

/// Same sampler, with item frequencies supplied by the caller.
pub fn sample_unbiased_test_with_counts(
    interactions: &[Interaction],
    counts: &BTreeMap<ItemId, usize>,
    size: usize,
    seed: u64,
) -> Result<Vec<Interaction>> {
    if size > interactions.len() {
        return Err(RahError::Validation(format!(
            "requested {size} samples from {} interactions",
            interactions.len()
        )));
    }
    let mut remaining: Vec<(usize, f64)> = interactions
        .iter()
        .enumerate()
        .map(|(n, inter)| (n, 1.0 / counts[&inter.item] as f64))
        .collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(size);
    for _ in 0..size {
        let total: f64 = remaining.iter().map(|(_, w)| w).sum();
        let mut ball = rng.gen_range(0.0..total);
        let mut chosen = remaining.len() - 1;
        for (slot, (_, w)) in remaining.iter().enumerate() {
            if ball < *w {
                chosen = slot;
                break;
            }
            ball -= w;
        }
        picked.push(remaining.remove(chosen).0);
    }
    picked.sort_unstable();
    Ok(picked.into_iter().map(|n| interactions[n].clone()).collect())
}

fn item_subseed(seed: u64, item: &ItemId) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(item.as_str().as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Tops up every item with fewer than `threshold` reviews using proxy
/// feedback from distinct, seeded-sampled assistants.
pub fn augment_unpopular(
    catalog: &BTreeMap<ItemId, Item>,
    interactions: &[Interaction],
    assistants: &BTreeMap<UserId, Personality>,
    threshold: usize,
    seed: u64,
    backend: &dyn Backend,
) -> Result<Vec<Interaction>> {
    let counts = item_counts(interactions);
    let pool: Vec<&UserId> = assistants.keys().collect();
    let mut added = Vec::new();
    for (id, item) in catalog {
        let have = counts.get(id).copied().unwrap_or(0);
        if have >= threshold {
            continue;
        }
        let need = threshold - have;
        if pool.len() < need {
            return Err(RahError::Run(format!(
                "item {id} needs {need} proxy reviews but only {} assistants exist",
                pool.len()
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(item_subseed(seed, id));
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut rng);
        for user in shuffled.into_iter().take(need) {
            let personality = &assistants[user];
            let mut proxies = proxy_actions(user, personality, &[item], backend)?;
            if proxies.is_empty() {
                return Err(RahError::Run(format!(
                    "assistant {user} produced no proxy action for item {id}"
                )));
            }
            added.append(&mut proxies);
        }
    }
    Ok(added)
}
