//! Factorization machine over user, item and domain one-hot features.
//!
//! score(x) = w0 + Σ_f w_f + Σ_{f<g} ⟨v_f, v_g⟩ for the active features,
//! with the pairwise term computed by the factorized sum-of-squares
//! identity: 0.5 Σ_k [(Σ_f v_fk)² − Σ_f v_fk²]. Every example activates
//! exactly three features (its user, its item, the item's domain), each
//! with value 1.
//!
//! Flat layout: [w0 | w (n_features) | V (n_features × d)].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RahError, Result};

use super::{
    grad_check_impl, logistic_loss, sgd_fit, sigmoid, with_sampled_negatives, Example, FitConfig,
    RecDataset,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layout {
    n_users: usize,
    n_items: usize,
    n_domains: usize,
    dim: usize,
    /// Domain index per item, carried so scoring needs only (user, item).
    domain_of_item: Vec<usize>,
}

impl Layout {
    fn n_features(&self) -> usize {
        self.n_users + self.n_items + self.n_domains
    }

    fn len(&self) -> usize {
        1 + self.n_features() * (1 + self.dim)
    }

    fn w(&self, f: usize) -> usize {
        1 + f
    }

    fn v(&self, f: usize) -> usize {
        1 + self.n_features() + f * self.dim
    }

    fn features(&self, user: usize, item: usize) -> [usize; 3] {
        [
            user,
            self.n_users + item,
            self.n_users + self.n_items + self.domain_of_item[item],
        ]
    }

    /// Pairwise interaction term via the sum-of-squares identity.
    fn pairwise(&self, p: &[f64], features: &[usize]) -> f64 {
        let mut total = 0.0;
        for k in 0..self.dim {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for &f in features {
                let v = p[self.v(f) + k];
                sum += v;
                sum_sq += v * v;
            }
            total += sum * sum - sum_sq;
        }
        0.5 * total
    }

    fn raw_score(&self, p: &[f64], user: usize, item: usize) -> f64 {
        let features = self.features(user, item);
        let linear: f64 = features.iter().map(|&f| p[self.w(f)]).sum();
        p[0] + linear + self.pairwise(p, &features)
    }

    fn objective(&self, p: &[f64], examples: &[Example], l2: f64) -> f64 {
        let data: f64 = examples
            .iter()
            .map(|ex| logistic_loss(self.raw_score(p, ex.user, ex.item), ex.label, ex.weight))
            .sum();
        let reg: f64 = p[1..].iter().map(|v| v * v).sum();
        data + 0.5 * l2 * reg
    }

    fn gradient(&self, p: &[f64], examples: &[Example], l2: f64) -> Vec<f64> {
        let mut grad = vec![0.0; p.len()];
        for (c, v) in p.iter().enumerate().skip(1) {
            grad[c] = l2 * v;
        }
        for ex in examples {
            let features = self.features(ex.user, ex.item);
            let g = ex.weight * (sigmoid(self.raw_score(p, ex.user, ex.item)) - ex.label);
            grad[0] += g;
            for &f in &features {
                grad[self.w(f)] += g;
            }
            // d(pairwise)/d v_fk = Σ_{g≠f} v_gk = (Σ_g v_gk) − v_fk.
            for k in 0..self.dim {
                let sum: f64 = features.iter().map(|&f| p[self.v(f) + k]).sum();
                for &f in &features {
                    grad[self.v(f) + k] += g * (sum - p[self.v(f) + k]);
                }
            }
        }
        grad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmModel {
    layout: Layout,
    params: Vec<f64>,
    pub loss_history: Vec<f64>,
}

impl FmModel {
    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.layout.n_users || item >= self.layout.n_items {
            return Err(RahError::Lookup(format!(
                "index out of range: user {user} of {}, item {item} of {}",
                self.layout.n_users, self.layout.n_items
            )));
        }
        Ok(self.layout.raw_score(&self.params, user, item))
    }

    /// Brute-force pairwise sum Σ_{f<g} ⟨v_f, v_g⟩ for the verification of
    /// the factorized identity.
    pub fn pairwise_brute_force(&self, user: usize, item: usize) -> f64 {
        let features = self.layout.features(user, item);
        let mut total = 0.0;
        for a in 0..features.len() {
            for b in (a + 1)..features.len() {
                for k in 0..self.layout.dim {
                    total += self.params[self.layout.v(features[a]) + k]
                        * self.params[self.layout.v(features[b]) + k];
                }
            }
        }
        total
    }

    /// Factorized pairwise term, for the same comparison.
    pub fn pairwise_factorized(&self, user: usize, item: usize) -> f64 {
        let features = self.layout.features(user, item);
        self.layout.pairwise(&self.params, &features)
    }
}

pub(super) fn fit(dataset: &RecDataset, config: &FitConfig) -> Result<FmModel> {
    let layout = Layout {
        n_users: dataset.users.len(),
        n_items: dataset.items.len(),
        n_domains: dataset.domains.len(),
        dim: config.dim,
        domain_of_item: dataset.domain_of_item.clone(),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let examples = with_sampled_negatives(dataset, config, &mut rng);

    let mut params = vec![0.0; layout.len()];
    for v in &mut params[layout.v(0)..] {
        *v = rng.gen_range(-0.01..0.01);
    }

    let l2 = config.l2;
    let loss_history = sgd_fit(
        &mut params,
        &examples,
        config,
        &|p, ex| layout.raw_score(p, ex.user, ex.item),
        &|p, ex, g, lr, l2| {
            let features = layout.features(ex.user, ex.item);
            p[0] -= lr * g;
            for &f in &features {
                let w = layout.w(f);
                p[w] -= lr * (g + l2 * p[w]);
            }
            for k in 0..layout.dim {
                let sum: f64 = features.iter().map(|&f| p[layout.v(f) + k]).sum();
                for &f in &features {
                    let c = layout.v(f) + k;
                    p[c] -= lr * (g * (sum - p[c]) + l2 * p[c]);
                }
            }
        },
        &|p| layout.objective(p, &examples, l2),
    )?;

    if params.iter().any(|v| !v.is_finite()) {
        return Err(RahError::Divergence {
            epoch: config.epochs,
            msg: "non-finite parameter after fit".into(),
        });
    }

    Ok(FmModel {
        layout,
        params,
        loss_history,
    })
}

pub(super) fn grad_check(
    dataset: &RecDataset,
    config: &FitConfig,
    epsilon: f64,
    points: usize,
    seed: u64,
) -> Result<f64> {
    let layout = Layout {
        n_users: dataset.users.len(),
        n_items: dataset.items.len(),
        n_domains: dataset.domains.len(),
        dim: config.dim,
        domain_of_item: dataset.domain_of_item.clone(),
    };
    let examples = dataset.examples.clone();
    let l2 = config.l2;
    let n = layout.len();
    Ok(grad_check_impl(
        n,
        &examples,
        &|p| layout.objective(p, &examples, l2),
        &|p| layout.gradient(p, &examples, l2),
        epsilon,
        points,
        seed,
    ))
}
