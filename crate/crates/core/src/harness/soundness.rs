//! Soundness of the deterministic perturbation conditions on random
//! instances: whenever a premise bundle holds, its inclusion must too.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::SummaryRow;
use crate::error::Result;
use crate::parallel::map_indexed;
use crate::perturbation::{check_c0, check_c1_c2_c3, check_corollary, exterior_parameters, ConditionReport, Corollary};
use crate::problem::random::{random_instance, RandomSpec};
use crate::problem::ScenarioSet;
use crate::rng::SeedLineage;

pub const CHECKS: [&str; 5] = ["C0", "C1-C3", "exterior-mr", "interior-scq", "interior-solution"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundnessTrial {
    pub instance: usize,
    pub dim: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub check: String,
    /// ok, invalid (witness or range requirement failed) or error.
    pub status: String,
    /// t for C0, ε̂ for the exterior checks, ε for the interior ones.
    pub param: f64,
    pub relaxation: f64,
    pub premises_hold: bool,
    pub conclusion_ok: bool,
    pub counterexample: bool,
    pub violation: f64,
    pub detail: String,
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn row(instance: usize, dim: usize, m: usize, n: usize, check: &str, param: f64, relaxation: f64, r: Result<ConditionReport>) -> SoundnessTrial {
    let mut t = SoundnessTrial {
        instance,
        dim,
        m,
        n,
        check: check.into(),
        status: "ok".into(),
        param,
        relaxation,
        premises_hold: false,
        conclusion_ok: false,
        counterexample: false,
        violation: f64::NAN,
        detail: String::new(),
    };
    match r {
        Ok(rep) => {
            if let Some(why) = &rep.premise_invalid {
                t.status = "invalid".into();
                t.detail = why.clone();
            }
            t.premises_hold = rep.premises_hold;
            t.counterexample = rep.is_counterexample();
            if let Some(c) = &rep.conclusion {
                t.conclusion_ok = c.holds;
                t.violation = c.violation;
            }
        }
        Err(e) => {
            t.status = "error".into();
            t.detail = e.to_string();
        }
    }
    t
}

/// Every applicable check on random instance `k`.
pub fn soundness_instance(seed: u64, k: usize, schedule: &[usize], budget: usize) -> Vec<SoundnessTrial> {
    let lineage = SeedLineage::new(seed, k as u64);
    let inst = match random_instance(lineage.child(0), RandomSpec::default()) {
        Ok(i) => i,
        Err(e) => return vec![row(k, 0, 0, 0, "instance", f64::NAN, 0.0, Err(e))],
    };
    let o = &inst.oracle;
    let (d, m) = (o.dim(), o.m());
    let mut rng = lineage.child(1).rng();
    let n = schedule[rng.random_range(0..schedule.len())];
    let sample = match ScenarioSet::generate(&inst.program.law, n, lineage.child(2)) {
        Ok(s) => Arc::new(s),
        Err(e) => return vec![row(k, d, m, n, "sample", f64::NAN, 0.0, Err(e))],
    };
    let emp = inst.program.empirical(&sample);
    let mut out = Vec::new();
    if m == 0 {
        let t = log_uniform(&mut rng, 1e-3, 1.0);
        out.push(row(k, d, m, n, CHECKS[0], t, 0.0, check_c0(o, &emp, &o.xstar, t, t / 2.0, budget)));
        return out;
    }
    let eps_hat = log_uniform(&mut rng, 1e-3, 0.3);
    let ext = emp.with_relaxation(eps_hat);
    let c123 = exterior_parameters(o, eps_hat).and_then(|p| check_c1_c2_c3(o, &ext, &p, budget));
    out.push(row(k, d, m, n, CHECKS[1], eps_hat, eps_hat, c123));
    if o.mr_constant.is_some() {
        out.push(row(k, d, m, n, CHECKS[2], eps_hat, eps_hat, check_corollary(o, &ext, Corollary::ExteriorMr, eps_hat, budget)));
    }
    let eps = log_uniform(&mut rng, 1e-3, 0.3);
    let relax = -eps * rng.random_range(0.0..1.0);
    let int = emp.with_relaxation(relax);
    for (name, which) in [(CHECKS[3], Corollary::InteriorScq), (CHECKS[4], Corollary::InteriorSolution)] {
        out.push(row(k, d, m, n, name, eps, relax, check_corollary(o, &int, which, eps, budget)));
    }
    out
}

pub fn run_soundness(cfg: &ExperimentConfig) -> Vec<SoundnessTrial> {
    map_indexed(cfg.trials, |k| soundness_instance(cfg.seed, k, &cfg.n_schedule, cfg.budget)).into_iter().flatten().collect()
}

/// One row per check. `held` counts evaluated rows without a
/// counterexample, `violations` the counterexamples; a check passes with
/// none and no errors.
pub fn summarize_soundness(rows: &[SoundnessTrial]) -> Vec<SummaryRow> {
    let mut checks: Vec<&str> = CHECKS.to_vec();
    for r in rows {
        if !checks.contains(&r.check.as_str()) {
            checks.push(&r.check);
        }
    }
    checks
        .into_iter()
        .filter_map(|c| {
            let batch: Vec<&SoundnessTrial> = rows.iter().filter(|r| r.check == c).collect();
            if batch.is_empty() {
                return None;
            }
            let evaluated = batch.iter().filter(|r| r.status != "error").count();
            let counter = batch.iter().filter(|r| r.counterexample).count();
            let errors = batch.len() - evaluated;
            Some(SummaryRow {
                kind: format!("soundness:{c}"),
                n: 0,
                trials: batch.len(),
                held: evaluated - counter,
                premise_held: batch.iter().filter(|r| r.premises_hold).count(),
                frequency: if evaluated > 0 { (evaluated - counter) as f64 / evaluated as f64 } else { f64::NAN },
                wilson_lo: f64::NAN,
                wilson_hi: f64::NAN,
                level: 0.0,
                violations: counter,
                errors,
                low_power: false,
                pass: counter == 0 && errors == 0,
                mean_threshold: f64::NAN,
                mean_sigma_hat: f64::NAN,
                mean_a1: f64::NAN,
                median_metric: f64::NAN,
            })
        })
        .collect()
}
