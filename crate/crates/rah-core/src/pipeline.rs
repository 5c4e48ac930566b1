//! Data pipeline: review ingestion, k-core filtering, cross-domain
//! retention, Learn/Proxy/Unseen splitting, synthetic-world generation and
//! corpus statistics.
//!
//! Files are processed in a single streaming pass; when several files are
//! ingested the merged log is sorted by (timestamp, user, item) so the
//! result does not depend on file order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{
    action_from_rating, DomainTag, Interaction, InteractionId, Item, ItemId,
    SplitAssignment, SplitSet, UserId,
};
use crate::error::{RahError, Result};
use crate::gateway::{SyntheticWorld, WorldUser};

/// One line of the ingestion format: a JSON object per review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReview {
    pub user: String,
    pub item: String,
    pub domain: String,
    pub rating: u8,
    pub timestamp: i64,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestResult {
    pub interactions: Vec<Interaction>,
    /// Item domain per id, needed downstream by retain_cross_domain.
    pub item_domains: BTreeMap<ItemId, DomainTag>,
    /// Unparseable lines, skipped.
    pub skipped: usize,
    /// Valid 3-star records, dropped by the rating mapping.
    pub dropped_neutral: usize,
}

/// Reads line-delimited reviews, mapping ratings to actions (4–5 Like,
/// 1–2 Dislike, 3 dropped). Malformed lines are counted and skipped; an
/// unreadable file is an error.
pub fn ingest(paths: &[&Path]) -> Result<IngestResult> {
    let mut interactions = Vec::new();
    let mut item_domains = BTreeMap::new();
    let mut skipped = 0usize;
    let mut dropped_neutral = 0usize;
    let mut seen_ids: BTreeSet<InteractionId> = BTreeSet::new();

    for path in paths {
        let text = fs::read_to_string(path)?;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let review: RawReview = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("{}: skipping malformed record: {e}", path.display());
                    skipped += 1;
                    continue;
                }
            };
            let domain = match DomainTag::new(&review.domain) {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("{}: skipping record: {e}", path.display());
                    skipped += 1;
                    continue;
                }
            };
            let action = match action_from_rating(review.rating) {
                Ok(Some(a)) => a,
                Ok(None) => {
                    dropped_neutral += 1;
                    continue;
                }
                Err(e) => {
                    log::warn!("{}: skipping record: {e}", path.display());
                    skipped += 1;
                    continue;
                }
            };
            let id = InteractionId::new(format!(
                "r:{}:{}:{}",
                review.user, review.item, review.timestamp
            ));
            if !seen_ids.insert(id.clone()) {
                // Exact duplicate record.
                skipped += 1;
                continue;
            }
            item_domains.insert(ItemId::new(&review.item), domain);
            interactions.push(Interaction {
                id,
                user: UserId::new(&review.user),
                item: ItemId::new(&review.item),
                action,
                rating: Some(review.rating),
                comment: if review.text.is_empty() { None } else { Some(review.text) },
                timestamp: review.timestamp,
                source: crate::domain::Source::Human,
            });
        }
    }
    interactions.sort_by(|a, b| {
        (a.timestamp, &a.user, &a.item).cmp(&(b.timestamp, &b.user, &b.item))
    });
    Ok(IngestResult {
        interactions,
        item_domains,
        skipped,
        dropped_neutral,
    })
}

/// Iteratively removes users and items with fewer than k interactions
/// until a fixed point. May return empty.
pub fn kcore_filter(interactions: &[Interaction], k: usize) -> Result<Vec<Interaction>> {
    if k < 1 {
        return Err(RahError::Config("k-core requires k >= 1".into()));
    }
    let mut kept: Vec<&Interaction> = interactions.iter().collect();
    loop {
        let mut user_counts: BTreeMap<&UserId, usize> = BTreeMap::new();
        let mut item_counts: BTreeMap<&ItemId, usize> = BTreeMap::new();
        for inter in &kept {
            *user_counts.entry(&inter.user).or_default() += 1;
            *item_counts.entry(&inter.item).or_default() += 1;
        }
        let before = kept.len();
        kept.retain(|inter| user_counts[&inter.user] >= k && item_counts[&inter.item] >= k);
        if kept.len() == before {
            return Ok(kept.into_iter().cloned().collect());
        }
    }
}

/// Keeps only users whose interactions span at least two domains.
pub fn retain_cross_domain(
    interactions: &[Interaction],
    item_domains: &BTreeMap<ItemId, DomainTag>,
) -> Result<Vec<Interaction>> {
    let mut domains_by_user: BTreeMap<&UserId, BTreeSet<&DomainTag>> = BTreeMap::new();
    for inter in interactions {
        let domain = item_domains.get(&inter.item).ok_or_else(|| {
            RahError::Lookup(format!("no domain known for item {}", inter.item))
        })?;
        domains_by_user.entry(&inter.user).or_default().insert(domain);
    }
    Ok(interactions
        .iter()
        .filter(|inter| domains_by_user[&inter.user].len() >= 2)
        .cloned()
        .collect())
}

fn user_subseed(seed: u64, user: &UserId) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(user.as_str().as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Per-user 1:1:1 split: seeded shuffle, then round-robin Learn, Proxy,
/// Unseen (so remainders favor Learn over Proxy over Unseen).
pub fn split_lpu(interactions: &[Interaction], seed: u64) -> Result<SplitAssignment> {
    let mut by_user: BTreeMap<&UserId, Vec<&Interaction>> = BTreeMap::new();
    for inter in interactions {
        by_user.entry(&inter.user).or_default().push(inter);
    }
    let mut assignment = BTreeMap::new();
    for (user, mut list) in by_user {
        list.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
        let mut rng = ChaCha12Rng::seed_from_u64(user_subseed(seed, user));
        list.shuffle(&mut rng);
        for (n, inter) in list.into_iter().enumerate() {
            let set = match n % 3 {
                0 => SplitSet::Learn,
                1 => SplitSet::Proxy,
                _ => SplitSet::Unseen,
            };
            assignment.insert(inter.id.clone(), set);
        }
    }
    Ok(SplitAssignment { assignment })
}

/// Generator configuration for synthetic worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub users: usize,
    pub items: usize,
    pub tags: usize,
    pub tags_per_item: usize,
    pub liked_tags_per_user: usize,
    pub disliked_tags_per_user: usize,
    /// 0 means every user interacts with the full catalog.
    pub interactions_per_user: usize,
    /// Probability of drawing the next exposed item from the user's
    /// liked-tag items (preference-biased exposure), used by E2.
    pub like_bias: f64,
    pub noise_rate: f64,
    /// Popularity skew of non-biased exposure draws; 0 = uniform.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            users: 50,
            items: 300,
            tags: 12,
            tags_per_item: 1,
            liked_tags_per_user: 2,
            disliked_tags_per_user: 2,
            interactions_per_user: 0,
            like_bias: 0.0,
            noise_rate: 0.0,
            zipf_exponent: 0.0,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.items == 0 || self.tags == 0 || self.tags_per_item == 0 {
            return Err(RahError::Config("world dimensions must be positive".into()));
        }
        if self.liked_tags_per_user + self.disliked_tags_per_user > self.tags {
            return Err(RahError::Config(format!(
                "{} liked + {} disliked tags exceed the {}-tag pool",
                self.liked_tags_per_user, self.disliked_tags_per_user, self.tags
            )));
        }
        if self.tags_per_item > self.tags {
            return Err(RahError::Config("more tags per item than tags exist".into()));
        }
        if !(0.0..=1.0).contains(&self.like_bias) {
            return Err(RahError::Config("like_bias must be in [0,1]".into()));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(RahError::Config("noise_rate must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// Generates a seeded synthetic world and its simulated Human interaction
/// log. Items cycle through the three standard domains and a global tag
/// pool; each user's actions follow the synthetic-human rule with seeded
/// noise flips.
pub fn make_world(config: &WorldConfig) -> Result<(SyntheticWorld, Vec<Interaction>)> {
    config.validate()?;
    let domains = DomainTag::standard();
    let tag_names: Vec<String> = (0..config.tags).map(|t| format!("t{t:02}")).collect();

    let mut catalog = BTreeMap::new();
    for n in 0..config.items {
        let id = ItemId::new(format!("i{n:04}"));
        let tags: BTreeSet<String> = (0..config.tags_per_item)
            .map(|off| tag_names[(n + off) % config.tags].clone())
            .collect();
        catalog.insert(
            id.clone(),
            Item {
                id,
                domain: domains[n % domains.len()].clone(),
                title: format!("synthetic item {n}"),
                description: String::new(),
                tags,
            },
        );
    }

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut users = BTreeMap::new();
    for n in 0..config.users {
        let mut pool: Vec<&String> = tag_names.iter().collect();
        pool.shuffle(&mut rng);
        let liked_tags: BTreeSet<String> = pool
            .iter()
            .take(config.liked_tags_per_user)
            .map(|t| t.to_string())
            .collect();
        let disliked_tags: BTreeSet<String> = pool
            .iter()
            .skip(config.liked_tags_per_user)
            .take(config.disliked_tags_per_user)
            .map(|t| t.to_string())
            .collect();
        users.insert(
            UserId::new(format!("u{n:03}")),
            WorldUser {
                liked_tags,
                disliked_tags,
                noise_rate: config.noise_rate,
            },
        );
    }
    let world = SyntheticWorld {
        catalog,
        users,
        seed: config.seed,
    };
    world.validate()?;

    let item_ids: Vec<ItemId> = world.catalog.keys().cloned().collect();
    // Zipf exposure weights over the item index; exponent 0 is uniform.
    let zipf: Vec<f64> = (0..item_ids.len())
        .map(|n| 1.0 / ((n + 1) as f64).powf(config.zipf_exponent))
        .collect();

    let mut interactions = Vec::new();
    for (user_id, user) in &world.users {
        let mut rng = ChaCha12Rng::seed_from_u64(user_subseed(config.seed, user_id));
        let exposed: Vec<&ItemId> = if config.interactions_per_user == 0 {
            item_ids.iter().collect()
        } else {
            let liked_pool: Vec<usize> = (0..item_ids.len())
                .filter(|&n| {
                    world.catalog[&item_ids[n]]
                        .tags
                        .intersection(&user.liked_tags)
                        .next()
                        .is_some()
                })
                .collect();
            let mut chosen: BTreeSet<usize> = BTreeSet::new();
            let budget = config.interactions_per_user.min(item_ids.len());
            while chosen.len() < budget {
                let pick = if !liked_pool.is_empty() && rng.gen_bool(config.like_bias) {
                    liked_pool[rng.gen_range(0..liked_pool.len())]
                } else {
                    weighted_index(&zipf, &mut rng)
                };
                chosen.insert(pick);
            }
            chosen.iter().map(|&n| &item_ids[n]).collect()
        };

        for (ts, item_id) in exposed.into_iter().enumerate() {
            let mut action = world.true_action(user_id, item_id)?;
            if user.noise_rate > 0.0 && rng.gen_bool(user.noise_rate) {
                action = action.flip();
            }
            interactions.push(Interaction {
                id: InteractionId::new(format!("h:{user_id}:{item_id}")),
                user: user_id.clone(),
                item: item_id.clone(),
                action,
                rating: None,
                comment: None,
                timestamp: ts as i64,
                source: crate::domain::Source::Human,
            });
        }
    }
    Ok((world, interactions))
}

fn weighted_index(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut ball = rng.gen_range(0.0..total);
    for (n, w) in weights.iter().enumerate() {
        if ball < *w {
            return n;
        }
        ball -= w;
    }
    weights.len() - 1
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub per_domain: BTreeMap<DomainTag, DomainStats>,
    pub total: DomainStats,
}

pub fn stats(
    interactions: &[Interaction],
    item_domains: &BTreeMap<ItemId, DomainTag>,
) -> Result<CorpusStats> {
    let mut users_by_domain: BTreeMap<&DomainTag, BTreeSet<&UserId>> = BTreeMap::new();
    let mut items_by_domain: BTreeMap<&DomainTag, BTreeSet<&ItemId>> = BTreeMap::new();
    let mut count_by_domain: BTreeMap<&DomainTag, usize> = BTreeMap::new();
    let mut all_users: BTreeSet<&UserId> = BTreeSet::new();
    let mut all_items: BTreeSet<&ItemId> = BTreeSet::new();
    for inter in interactions {
        let domain = item_domains.get(&inter.item).ok_or_else(|| {
            RahError::Lookup(format!("no domain known for item {}", inter.item))
        })?;
        users_by_domain.entry(domain).or_default().insert(&inter.user);
        items_by_domain.entry(domain).or_default().insert(&inter.item);
        *count_by_domain.entry(domain).or_default() += 1;
        all_users.insert(&inter.user);
        all_items.insert(&inter.item);
    }
    let mut per_domain = BTreeMap::new();
    for (domain, count) in &count_by_domain {
        per_domain.insert(
            (*domain).clone(),
            DomainStats {
                users: users_by_domain[domain].len(),
                items: items_by_domain[domain].len(),
                interactions: *count,
            },
        );
    }
    Ok(CorpusStats {
        per_domain,
        total: DomainStats {
            users: all_users.len(),
            items: all_items.len(),
            interactions: interactions.len(),
        },
    })
}

const WORLD_MAGIC: &str = "#rah-world v1";
const SPLIT_MAGIC: &str = "#rah-split v1";

pub fn save_world(world: &SyntheticWorld, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(world)
        .map_err(|e| RahError::Decode(format!("cannot encode world: {e}")))?;
    fs::write(path, format!("{WORLD_MAGIC}\n{body}\n"))?;
    Ok(())
}

pub fn load_world(path: &Path) -> Result<SyntheticWorld> {
    let text = fs::read_to_string(path)?;
    let body = text.strip_prefix(WORLD_MAGIC).ok_or_else(|| {
        RahError::Decode(format!("{}: missing world header", path.display()))
    })?;
    let world: SyntheticWorld = serde_json::from_str(body)
        .map_err(|e| RahError::Decode(format!("{}: {e}", path.display())))?;
    world.validate()?;
    Ok(world)
}

/// One JSON interaction per line.
pub fn save_interactions(interactions: &[Interaction], path: &Path) -> Result<()> {
    let mut out = String::new();
    for inter in interactions {
        out.push_str(
            &serde_json::to_string(inter)
                .map_err(|e| RahError::Decode(format!("cannot encode interaction: {e}")))?,
        );
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_interactions(path: &Path) -> Result<Vec<Interaction>> {
    let text = fs::read_to_string(path)?;
    let mut interactions = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inter: Interaction = serde_json::from_str(line).map_err(|e| RahError::Parse {
            line: n + 1,
            msg: format!("{}: {e}", path.display()),
        })?;
        inter.validate()?;
        interactions.push(inter);
    }
    Ok(interactions)
}

pub fn save_split(split: &SplitAssignment, path: &Path) -> Result<()> {
    let mut out = String::from(SPLIT_MAGIC);
    out.push('\n');
    for (id, set) in &split.assignment {
        out.push_str(&format!("{id}\t{}\n", set.as_str()));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_split(path: &Path) -> Result<SplitAssignment> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(SPLIT_MAGIC) {
        return Err(RahError::Decode(format!(
            "{}: missing split header",
            path.display()
        )));
    }
    let mut assignment = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, set) = line.split_once('\t').ok_or_else(|| RahError::Parse {
            line: n + 2,
            msg: "expected <interaction id>\\t<set>".into(),
        })?;
        assignment.insert(InteractionId::new(id), SplitSet::parse(set)?);
    }
    Ok(SplitAssignment { assignment })
}
