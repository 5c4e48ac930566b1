//! Report emission: fixed-order CSV tables stamped with the config hash
//! and seed of every row, plus a short human-readable summary. All floats
//! are printed with six decimals so identical runs emit identical bytes.

use std::fmt::Write as _;

use crate::experiments::e2::E2Report;
use crate::experiments::e3::E3Report;
use crate::experiments::F1Report;

fn f(x: f64) -> String {
    format!("{x:.6}")
}

/// E1 rows across seeds: `experiment,config,seed,variant,scope,f1,users`.
pub fn e1_csv(runs: &[(u64, F1Report)], config_hash: &str) -> String {
    let mut out = String::from("experiment,config,seed,variant,scope,f1,users\n");
    for (seed, report) in runs {
        for row in &report.rows {
            writeln!(
                out,
                "e1,{config_hash},{seed},{},{},{},{}",
                row.variant.as_str(),
                row.scope.label(),
                f(row.f1),
                row.users_scored
            )
            .expect("string write");
        }
    }
    out
}

/// E2 rows across seeds, including per-model deltas against the none arm
/// and the hash proving all arms shared the same base inputs.
pub fn e2_csv(runs: &[(u64, E2Report)], config_hash: &str) -> String {
    let mut out = String::from(
        "experiment,config,seed,model,arm,ndcg,recall,ndcg_delta,recall_delta,shared_inputs\n",
    );
    for (seed, report) in runs {
        for row in &report.rows {
            writeln!(
                out,
                "e2,{config_hash},{seed},{},{},{},{},{},{},{}",
                row.model.as_str(),
                row.arm.as_str(),
                f(row.ndcg),
                f(row.recall),
                f(row.ndcg_delta),
                f(row.recall_delta),
                report.shared_input_hash
            )
            .expect("string write");
        }
    }
    out
}

/// E3 rows across seeds.
pub fn e3_csv(runs: &[(u64, E3Report)], config_hash: &str) -> String {
    let mut out =
        String::from("experiment,config,seed,arm,ndcg,recall,test_size,augmented\n");
    for (seed, report) in runs {
        for row in &report.rows {
            writeln!(
                out,
                "e3,{config_hash},{seed},{},{},{},{},{}",
                row.arm.as_str(),
                f(row.ndcg),
                f(row.recall),
                report.test_size,
                report.augmented
            )
            .expect("string write");
        }
    }
    out
}

/// Seed-averaged digest of all three experiments.
pub fn summary(
    e1: &[(u64, F1Report)],
    e2: &[(u64, E2Report)],
    e3: &[(u64, E3Report)],
    config_hash: &str,
) -> String {
    let mut out = String::new();
    writeln!(out, "config {config_hash}, {} seed(s)", e1.len()).expect("string write");

    writeln!(out, "\n[e1] mean macro-F1 by variant and scope").expect("string write");
    if let Some((_, first)) = e1.first() {
        for i in 0..first.rows.len() {
            let mean = e1.iter().map(|(_, r)| r.rows[i].f1).sum::<f64>() / e1.len() as f64;
            writeln!(
                out,
                "  {:6} {:20} {}",
                first.rows[i].variant.as_str(),
                first.rows[i].scope.label(),
                f(mean)
            )
            .expect("string write");
        }
    }

    writeln!(out, "\n[e2] mean NDCG@10 by model and feedback arm").expect("string write");
    if let Some((_, first)) = e2.first() {
        for i in 0..first.rows.len() {
            let mean = e2.iter().map(|(_, r)| r.rows[i].ndcg).sum::<f64>() / e2.len() as f64;
            writeln!(
                out,
                "  {:10} {:10} {}",
                first.rows[i].model.as_str(),
                first.rows[i].arm.as_str(),
                f(mean)
            )
            .expect("string write");
        }
    }

    writeln!(out, "\n[e3] mean unbiased NDCG@10 by arm").expect("string write");
    if let Some((_, first)) = e3.first() {
        for i in 0..first.rows.len() {
            let mean = e3.iter().map(|(_, r)| r.rows[i].ndcg).sum::<f64>() / e3.len() as f64;
            writeln!(out, "  {:10} {}", first.rows[i].arm.as_str(), f(mean))
                .expect("string write");
        }
    }
    out
}
