//! Biased matrix factorization with weighted pointwise logistic loss.
//!
//! score(u, i) = μ + b_u + b_i + U_u · V_i. Parameters live in one flat
//! vector so the SGD loop, the epoch objective and the gradient check all
//! share the same layout:
//! [μ | b_u (n_users) | b_i (n_items) | U (n_users × d) | V (n_items × d)].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RahError, Result};

use super::{
    grad_check_impl, logistic_loss, sgd_fit, sigmoid, with_sampled_negatives, Example, FitConfig,
    RecDataset,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Layout {
    n_users: usize,
    n_items: usize,
    dim: usize,
}

impl Layout {
    fn len(&self) -> usize {
        1 + self.n_users + self.n_items + (self.n_users + self.n_items) * self.dim
    }

    fn bu(&self, u: usize) -> usize {
        1 + u
    }

    fn bi(&self, i: usize) -> usize {
        1 + self.n_users + i
    }

    fn uf(&self, u: usize) -> usize {
        1 + self.n_users + self.n_items + u * self.dim
    }

    fn vf(&self, i: usize) -> usize {
        1 + self.n_users + self.n_items + self.n_users * self.dim + i * self.dim
    }

    fn raw_score(&self, p: &[f64], u: usize, i: usize) -> f64 {
        let mut x = p[0] + p[self.bu(u)] + p[self.bi(i)];
        let uf = self.uf(u);
        let vf = self.vf(i);
        for k in 0..self.dim {
            x += p[uf + k] * p[vf + k];
        }
        x
    }

    /// Weighted logistic data loss plus L2 on everything except μ.
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
            let g = ex.weight * (sigmoid(self.raw_score(p, ex.user, ex.item)) - ex.label);
            grad[0] += g;
            grad[self.bu(ex.user)] += g;
            grad[self.bi(ex.item)] += g;
            let uf = self.uf(ex.user);
            let vf = self.vf(ex.item);
            for k in 0..self.dim {
                grad[uf + k] += g * p[vf + k];
                grad[vf + k] += g * p[uf + k];
            }
        }
        grad
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfModel {
    layout: Layout,
    params: Vec<f64>,
    pub loss_history: Vec<f64>,
}

impl MfModel {
    /// Builds a model from explicit components; used in tests and for the
    /// documented score contract.
    pub fn from_parts(
        mu: f64,
        user_bias: &[f64],
        item_bias: &[f64],
        user_factors: &[Vec<f64>],
        item_factors: &[Vec<f64>],
    ) -> Self {
        let dim = user_factors.first().map_or(0, Vec::len);
        let layout = Layout {
            n_users: user_bias.len(),
            n_items: item_bias.len(),
            dim,
        };
        let mut params = vec![0.0; layout.len()];
        params[0] = mu;
        params[1..1 + layout.n_users].copy_from_slice(user_bias);
        params[layout.bi(0)..layout.bi(0) + layout.n_items].copy_from_slice(item_bias);
        for (u, f) in user_factors.iter().enumerate() {
            params[layout.uf(u)..layout.uf(u) + dim].copy_from_slice(f);
        }
        for (i, f) in item_factors.iter().enumerate() {
            params[layout.vf(i)..layout.vf(i) + dim].copy_from_slice(f);
        }
        MfModel {
            layout,
            params,
            loss_history: Vec::new(),
        }
    }

    pub fn score(&self, user: usize, item: usize) -> Result<f64> {
        if user >= self.layout.n_users || item >= self.layout.n_items {
            return Err(RahError::Lookup(format!(
                "index out of range: user {user} of {}, item {item} of {}",
                self.layout.n_users, self.layout.n_items
            )));
        }
        Ok(self.layout.raw_score(&self.params, user, item))
    }
}

pub(super) fn fit(dataset: &RecDataset, config: &FitConfig) -> Result<MfModel> {
    let layout = Layout {
        n_users: dataset.users.len(),
        n_items: dataset.items.len(),
        dim: config.dim,
    };
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let examples = with_sampled_negatives(dataset, config, &mut rng);

    let mut params = vec![0.0; layout.len()];
    for v in &mut params[layout.uf(0)..] {
        *v = rng.gen_range(-0.01..0.01);
    }

    let l2 = config.l2;
    let loss_history = sgd_fit(
        &mut params,
        &examples,
        config,
        &|p, ex| layout.raw_score(p, ex.user, ex.item),
        &|p, ex, g, lr, l2| {
            let (u, i) = (ex.user, ex.item);
            p[0] -= lr * g;
            p[layout.bu(u)] -= lr * (g + l2 * p[layout.bu(u)]);
            p[layout.bi(i)] -= lr * (g + l2 * p[layout.bi(i)]);
            let uf = layout.uf(u);
            let vf = layout.vf(i);
            for k in 0..layout.dim {
                let (pu, pv) = (p[uf + k], p[vf + k]);
                p[uf + k] -= lr * (g * pv + l2 * pu);
                p[vf + k] -= lr * (g * pu + l2 * pv);
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

    Ok(MfModel {
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
        dim: config.dim,
    };
    let examples = dataset.examples.clone();
    let l2 = config.l2;
    Ok(grad_check_impl(
        layout.len(),
        &examples,
        &|p| layout.objective(p, &examples, l2),
        &|p| layout.gradient(p, &examples, l2),
        epsilon,
        points,
        seed,
    ))
}
