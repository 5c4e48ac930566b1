//! End-to-end experiment runner: for each configured seed, synthesize a
//! world, split it, run E1/E2/E3 on the oracle backend, and emit the CSV
//! reports plus a summary. Identical configs produce byte-identical
//! output files.

use std::collections::BTreeSet;
use std::path::Path;

use crate::alignment::WorldResponder;
use crate::domain::DomainTag;
use crate::error::{RahError, Result};
use crate::experiments::e2::{e2_proxy, E2Report};
use crate::experiments::e3::{e3_bias, E3Params, E3Report};
use crate::experiments::{e1_alignment, report, ExperimentConfig, F1Report, Scope, Variant};
use crate::gateway::{BackendKind, OracleBackend};
use crate::pipeline::{make_world, split_lpu};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub e1_csv: String,
    pub e2_csv: String,
    pub e3_csv: String,
    pub summary: String,
}

/// Runs every experiment for every seed in the config.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    if config.backend != BackendKind::Oracle {
        return Err(RahError::Config(
            "the experiment runner needs the oracle backend: synthetic worlds carry the \
             ground truth the experiments score against"
                .into(),
        ));
    }
    config.validate()?;

    let mut e1_runs: Vec<(u64, F1Report)> = Vec::new();
    let mut e2_runs: Vec<(u64, E2Report)> = Vec::new();
    let mut e3_runs: Vec<(u64, E3Report)> = Vec::new();

    for &seed in &config.seeds {
        let mut world_config = config.world.clone();
        world_config.seed = seed;
        let (world, interactions) = make_world(&world_config)?;
        let split = split_lpu(&interactions, seed)?;
        let data = super::WorldData {
            catalog: &world.catalog,
            interactions: &interactions,
            split: &split,
        };
        let backend = OracleBackend::new(&world);
        let responder = WorldResponder::new(&world);

        let domains: Vec<DomainTag> = world
            .catalog
            .values()
            .map(|i| i.domain.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let scopes = Scope::all(&domains);

        e1_runs.push((
            seed,
            e1_alignment(
                &data,
                &Variant::all(),
                &scopes,
                config.loop_config.max_iters,
                &backend,
                Some(&responder),
            )?,
        ));
        e2_runs.push((
            seed,
            e2_proxy(
                &data,
                &config.models,
                &config.fit,
                &config.loop_config,
                config.background_users,
                &backend,
                Some(&responder),
                seed,
            )?,
        ));
        e3_runs.push((
            seed,
            e3_bias(
                &data,
                &E3Params {
                    fit: config.fit.clone(),
                    loop_config: config.loop_config.clone(),
                    gamma: config.gamma,
                    clip: config.clip,
                    threshold: config.unpopular_threshold,
                    test_size: config.test_size,
                },
                &backend,
                Some(&responder),
                seed,
            )?,
        ));
    }

    Ok(RunOutput {
        e1_csv: report::e1_csv(&e1_runs, &config.hash),
        e2_csv: report::e2_csv(&e2_runs, &config.hash),
        e3_csv: report::e3_csv(&e3_runs, &config.hash),
        summary: report::summary(&e1_runs, &e2_runs, &e3_runs, &config.hash),
    })
}

/// Runs and writes `e1.csv`, `e2.csv`, `e3.csv` and `summary.txt`.
pub fn run_to_dir(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    let output = run(config)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("e1.csv"), &output.e1_csv)?;
    std::fs::write(out_dir.join("e2.csv"), &output.e2_csv)?;
    std::fs::write(out_dir.join("e3.csv"), &output.e3_csv)?;
    std::fs::write(out_dir.join("summary.txt"), &output.summary)?;
    Ok(output)
}
