//! Closed-form models: item-based KNN over the binary Like matrix, and a
//! frequency (popularity) baseline.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{RahError, Result};

use super::RecDataset;

/// Item-based collaborative filter: cosine similarity between item columns
/// of the binary user–item Like matrix, truncated to the top-k neighbors
/// per item. score(u, i) = Σ sim(i, j) over neighbors j the user Liked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    n_users: usize,
    /// Top-k (neighbor index, similarity) per item, similarity descending,
    /// ties by ascending neighbor index; self excluded.
    neighbors: Vec<Vec<(usize, f64)>>,
    /// Liked item indices per user.
    liked: Vec<BTreeSet<usize>>,
}

impl KnnModel {
    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.n_users || item >= self.neighbors.len() {
            return Err(RahError::Lookup(format!(
                "index out of range: user {user} of {}, item {item} of {}",
                self.n_users,
                self.neighbors.len()
            )));
        }
        let liked = &self.liked[user];
        Ok(self.neighbors[item]
            .iter()
            .filter(|(j, _)| liked.contains(j))
            .map(|(_, sim)| sim)
            .sum())
    }

    /// Raw cosine similarity between two items (before truncation), for
    /// verification: sim(i,i) = 1 where defined, symmetric, in [0,1].
    pub fn similarity(likers: &[BTreeSet<usize>], i: usize, j: usize) -> f64 {
        let (a, b) = (&likers[i], &likers[j]);
        if a.is_empty() || b.is_empty() {
            return 0.0;
        }
        let inter = a.intersection(b).count() as f64;
        inter / ((a.len() as f64).sqrt() * (b.len() as f64).sqrt())
    }
}

pub(super) fn fit_knn(dataset: &RecDataset, k: usize) -> KnnModel {
    let n_users = dataset.users.len();
    let n_items = dataset.items.len();

    let mut liked = vec![BTreeSet::new(); n_users];
    let mut likers = vec![BTreeSet::new(); n_items];
    for ex in &dataset.examples {
        if ex.label > 0.5 {
            liked[ex.user].insert(ex.item);
            likers[ex.item].insert(ex.user);
        }
    }

    let mut neighbors = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let mut sims: Vec<(usize, f64)> = (0..n_items)
            .filter(|&j| j != i)
            .map(|j| (j, KnnModel::similarity(&likers, i, j)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        sims.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
        sims.truncate(k);
        neighbors.push(sims);
    }

    KnnModel {
        n_users,
        neighbors,
        liked,
    }
}

/// Popularity baseline: an item's score is its interaction frequency,
/// independent of the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopModel {
    n_users: usize,
    counts: Vec<f64>,
}

impl PopModel {
    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.n_users || item >= self.counts.len() {
            return Err(RahError::Lookup(format!(
                "index out of range: user {user} of {}, item {item} of {}",
                self.n_users,
                self.counts.len()
            )));
        }
        Ok(self.counts[item])
    }
}

pub(super) fn fit_popularity(dataset: &RecDataset) -> PopModel {
    let mut counts = vec![0.0; dataset.items.len()];
    for ex in &dataset.examples {
        counts[ex.item] += 1.0;
    }
    PopModel {
        n_users: dataset.users.len(),
        counts,
    }
}
