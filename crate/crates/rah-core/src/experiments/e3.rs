//! E3: popularity-bias mitigation. Compares MF against MF+IPS (inverse
//! propensity weights), MF+RAH (proxy augmentation of unpopular items)
//! and MF+IPS+RAH on an unbiased test sample drawn inversely proportional
//! to item frequency.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::alignment::{learn_set, LoopConfig, QueryResponder};
use crate::debias::{
    augment_unpopular, estimate_propensity, ips_weights, item_counts,
    sample_unbiased_test_with_counts,
};
use crate::domain::{Action, Interaction, Personality, SplitSet, UserId};
use crate::error::{RahError, Result};
use crate::gateway::Backend;
use crate::recsys::{self, FitConfig, ModelKind, RecDataset};

use super::WorldData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum E3Arm {
    Base,
    Ips,
    Rah,
    IpsRah,
}

impl E3Arm {
    pub fn all() -> [E3Arm; 4] {
        [E3Arm::Base, E3Arm::Ips, E3Arm::Rah, E3Arm::IpsRah]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            E3Arm::Base => "mf",
            E3Arm::Ips => "mf+ips",
            E3Arm::Rah => "mf+rah",
            E3Arm::IpsRah => "mf+ips+rah",
        }
    }

    fn uses_ips(self) -> bool {
        matches!(self, E3Arm::Ips | E3Arm::IpsRah)
    }

    fn uses_rah(self) -> bool {
        matches!(self, E3Arm::Rah | E3Arm::IpsRah)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E3Row {
    pub arm: E3Arm,
    pub ndcg: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E3Report {
    pub rows: Vec<E3Row>,
    pub test_size: usize,
    pub augmented: usize,
}

impl E3Report {
    pub fn ndcg(&self, arm: E3Arm) -> f64 {
        self.rows
            .iter()
            .find(|r| r.arm == arm)
            .map(|r| r.ndcg)
            .expect("all arms present")
    }
}

pub struct E3Params {
    pub fit: FitConfig,
    pub loop_config: LoopConfig,
    pub gamma: f64,
    pub clip: f64,
    /// Unpopular-item review threshold; 0 disables augmentation.
    pub threshold: usize,
    pub test_size: usize,
}

/// Runs the four arms. Train = Learn + Proxy interactions; the test set
/// is an inverse-frequency sample of Unseen interactions (frequencies
/// from the full log). Propensities are estimated on the biased train
/// set; both +RAH arms share one augmentation pass.
pub fn e3_bias(
    data: &WorldData,
    params: &E3Params,
    backend: &dyn Backend,
    responder: Option<&dyn QueryResponder>,
    seed: u64,
) -> Result<E3Report> {
    let mut train: Vec<Interaction> = Vec::new();
    let mut unseen: Vec<Interaction> = Vec::new();
    let mut learn_by_user: BTreeMap<UserId, Vec<Interaction>> = BTreeMap::new();
    for inter in data.interactions {
        match data.set_of(inter)? {
            SplitSet::Learn => {
                train.push(inter.clone());
                learn_by_user
                    .entry(inter.user.clone())
                    .or_default()
                    .push(inter.clone());
            }
            SplitSet::Proxy => train.push(inter.clone()),
            SplitSet::Unseen => unseen.push(inter.clone()),
        }
    }
    if unseen.is_empty() {
        return Err(RahError::Run("no Unseen interactions to sample from".into()));
    }

    // Unbiased test sample: only Likes matter for ranking relevance, but
    // the sample keeps Dislikes too so the protocol stays a plain
    // subsample of the log.
    let counts = item_counts(data.interactions);
    let size = params.test_size.min(unseen.len());
    let test = sample_unbiased_test_with_counts(&unseen, &counts, size, seed)?;
    if !test.iter().any(|i| i.action == Action::Like) {
        return Err(RahError::Run("unbiased test sample has no Likes".into()));
    }

    // Augmentation shared by the +RAH arms.
    let augmentation = if params.threshold > 0 {
        let mut assistants: BTreeMap<UserId, Personality> = BTreeMap::new();
        for (user, interactions) in &learn_by_user {
            assistants.insert(
                user.clone(),
                learn_set(
                    user,
                    interactions,
                    data.catalog,
                    &params.loop_config,
                    backend,
                    responder,
                )?,
            );
        }
        augment_unpopular(
            data.catalog,
            &train,
            &assistants,
            params.threshold,
            seed,
            backend,
        )?
    } else {
        Vec::new()
    };

    let candidates: Vec<_> = data.catalog.keys().cloned().collect();
    let mut rows = Vec::new();
    for arm in E3Arm::all() {
        let mut arm_train = train.clone();
        if arm.uses_rah() {
            arm_train.extend(augmentation.iter().cloned());
        }
        let mut dataset = RecDataset::from_interactions(&arm_train, data.catalog)?;
        if arm.uses_ips() {
            // Propensities from the biased observed train set.
            let table =
                estimate_propensity(&train, dataset.items.iter(), params.gamma, params.clip)?;
            let weights = ips_weights(&table);
            let by_index: Vec<f64> = dataset.items.iter().map(|id| weights[id]).collect();
            dataset.apply_item_weights(&by_index)?;
        }
        let model = recsys::fit(ModelKind::Mf, &dataset, &params.fit)?;
        let report = recsys::evaluate(&model, &dataset, &test, &candidates)?;
        rows.push(E3Row {
            arm,
            ndcg: report.ndcg,
            recall: report.recall,
        });
    }
    Ok(E3Report {
        rows,
        test_size: size,
        augmented: augmentation.len(),
    })
}
