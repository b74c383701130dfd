//! Monte Carlo coverage of the probabilistic persistence theorems.
//!
//! Each trial draws a sample, sets ε̂ from the data-dependent threshold of
//! the theorem's premise, records whether that premise event holds, and
//! checks the theorem's inclusion on the empirical near-optimal set.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{EpsPolicy, ExperimentConfig, ExperimentKind};
use super::report::{coverage, SummaryRow};
use crate::entropy::{a1_auto, constraint_variance, variance_proxies_with_a1};
use crate::error::{Error, Result};
use crate::parallel::map_indexed;
use crate::perturbation::{inclusion_check, Target};
use crate::problem::{Instance, ScenarioSet};
use crate::rng::SeedLineage;
use crate::sets::{localized_set_spec, SetLabel};
use crate::stats::{mean, median};

/// Fixed-point iterations allowed when ε̂ enters its own threshold.
pub const MAX_FIXED_POINT: usize = 60;

const A1_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTrial {
    pub kind: String,
    pub trial: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub eps: f64,
    /// The relaxation ε̂ of the empirical program.
    pub eps_hat: f64,
    /// The premise threshold at the final ε̂.
    pub threshold: f64,
    pub sigma_hat: f64,
    pub a1_objective: f64,
    pub a1_constraint: f64,
    pub iterations: usize,
    pub event_ok: bool,
    pub conclusion_ok: bool,
    pub violation: f64,
    pub candidates: usize,
    pub error: String,
}

/// Premise constants: threshold = factor·σ̂·√(1 + ln(C·max(m,1)/ρ))/√N.
fn premise(kind: ExperimentKind) -> (f64, f64) {
    match kind {
        ExperimentKind::FixedSetCoverage => (2.0, 3.0),
        ExperimentKind::ExteriorMrCoverage => (2.0, 9.0),
        ExperimentKind::InteriorScqCoverage => (4.0, 11.0),
        _ => (4.0, 9.0),
    }
}

/// The fixed instance and everything a trial needs besides its sample.
pub struct CoverageSetup {
    pub kind: ExperimentKind,
    pub instance: Instance,
    pub eps: f64,
    pub rho: f64,
    pub policy: EpsPolicy,
    pub budget: usize,
    ystar: Vec<f64>,
    target_eps: f64,
}

impl CoverageSetup {
    pub fn new(kind: ExperimentKind, instance: Instance, eps: f64, rho: f64, policy: EpsPolicy, budget: usize) -> Result<Self> {
        let o = &instance.oracle;
        let m = o.m();
        if kind == ExperimentKind::FixedSetCoverage && m != 0 {
            return Err(Error::Config("the fixed-set theorem needs an instance without stochastic constraints".into()));
        }
        if kind != ExperimentKind::FixedSetCoverage && m == 0 {
            return Err(Error::NoConstraints);
        }
        let mut ystar = o.xstar.clone();
        let mut target_eps = 2.0 * eps;
        match kind {
            ExperimentKind::ExteriorMrCoverage if o.mr_constant.is_none() => return Err(Error::Missing("metric regularity constant")),
            ExperimentKind::InteriorScqCoverage => {
                let slack = o.slater.as_ref().ok_or(Error::Missing("Slater point"))?.slack;
                if eps > slack / 2.0 {
                    return Err(Error::Config(format!("eps {eps} exceeds half the Slater slack {slack}")));
                }
                ystar = o.relaxed_min(-2.0 * eps)?.1;
                target_eps = 2.0 * eps + o.gap(2.0 * eps)?;
            }
            ExperimentKind::InteriorSolutionCoverage => {
                let ring = (1..=m).map(|i| -o.value(i, &o.xstar)).fold(f64::INFINITY, f64::min);
                if !(eps <= ring / 2.0) {
                    return Err(Error::Config(format!("eps {eps} exceeds half the constraint slack {ring} at the solution")));
                }
            }
            _ => {}
        }
        Ok(Self { kind, instance, eps, rho, policy, budget, ystar, target_eps })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let eps = cfg.eps.ok_or(Error::Missing("eps"))?;
        Self::new(cfg.kind, cfg.load_instance()?, eps, cfg.rho, cfg.eps_policy, cfg.budget)
    }

    fn labels(&self) -> (SetLabel, fn(usize) -> SetLabel) {
        match self.kind {
            ExperimentKind::ExteriorMrCoverage => (SetLabel::ExteriorLevelObjective, SetLabel::ExteriorActiveConstraint),
            ExperimentKind::InteriorScqCoverage => (SetLabel::GapLevelObjective, SetLabel::GapActiveConstraint),
            _ => (SetLabel::LevelObjective, SetLabel::ActiveConstraint),
        }
    }

    /// Scale of the localized sets at relaxation ε̂.
    fn gamma(&self, eps_hat: f64) -> f64 {
        match self.kind {
            ExperimentKind::FixedSetCoverage => 2.0 * eps_hat,
            ExperimentKind::ExteriorMrCoverage => 3.0 * eps_hat,
            _ => 2.0 * self.eps,
        }
    }

    fn a1(&self, label: SetLabel, gamma: f64) -> Result<f64> {
        match localized_set_spec(&self.instance.oracle, label, gamma).and_then(|s| a1_auto(&s, A1_TOL)) {
            Ok(a) => Ok(a.value),
            Err(Error::EmptySet) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// σ̂ of the premise at ε̂, with the objective and largest constraint A₁.
    pub fn sigma_hat(&self, sample: &Arc<ScenarioSet>, eps_hat: f64) -> Result<(f64, f64, f64)> {
        let inst = &self.instance;
        let o = &inst.oracle;
        let m = o.m();
        let gamma = self.gamma(eps_hat);
        let (l0, li) = self.labels();
        let mut a1 = vec![self.a1(l0, gamma)?];
        for i in 1..=m {
            a1.push(self.a1(li(i), gamma)?);
        }
        let vp = variance_proxies_with_a1(&inst.program, sample, o, &o.xstar, &self.ystar, &a1, gamma)?;
        let mut s = vp.sigma_hat_0.max(vp.sigma_hat_i).max(vp.v_i_sq.sqrt());
        if m > 0 && self.ystar != o.xstar {
            let emp = inst.program.empirical(sample);
            s = s.max(constraint_variance(&inst.program, &emp, o, &self.ystar)?.sqrt());
        }
        if self.kind == ExperimentKind::InteriorScqCoverage {
            s = s.max(vp.v0_sq.sqrt());
        }
        Ok((s, a1[0], a1[1..].iter().copied().fold(0.0, f64::max)))
    }

    fn threshold(&self, sigma: f64, n: usize) -> f64 {
        let (factor, c) = premise(self.kind);
        let m = self.instance.oracle.m().max(1) as f64;
        factor * sigma * (1.0 + (c * m / self.rho).ln()).sqrt() / (n as f64).sqrt()
    }

    pub fn run_trial(&self, trial: usize, n: usize, lineage: SeedLineage) -> CoverageTrial {
        let mut row = CoverageTrial {
            kind: self.kind.name().into(),
            trial,
            n,
            eps: self.eps,
            eps_hat: f64::NAN,
            threshold: f64::NAN,
            sigma_hat: f64::NAN,
            a1_objective: f64::NAN,
            a1_constraint: f64::NAN,
            iterations: 0,
            event_ok: false,
            conclusion_ok: false,
            violation: f64::NAN,
            candidates: 0,
            error: String::new(),
        };
        if let Err(e) = self.fill(&mut row, lineage) {
            row.error = e.to_string();
        }
        row
    }

    fn fill(&self, row: &mut CoverageTrial, lineage: SeedLineage) -> Result<()> {
        let inst = &self.instance;
        let o = &inst.oracle;
        let n = row.n;
        let sample = Arc::new(ScenarioSet::generate(&inst.program.law, n, lineage)?);
        let record = |row: &mut CoverageTrial, eps_hat: f64| -> Result<f64> {
            let (s, a0, ai) = self.sigma_hat(&sample, eps_hat)?;
            row.sigma_hat = s;
            row.a1_objective = a0;
            row.a1_constraint = ai;
            row.iterations += 1;
            Ok(self.threshold(s, n))
        };
        let exterior = matches!(self.kind, ExperimentKind::FixedSetCoverage | ExperimentKind::ExteriorMrCoverage);
        let eps_hat = if exterior {
            match self.policy {
                EpsPolicy::Fixed { eps_hat } => {
                    row.threshold = record(row, eps_hat)?;
                    eps_hat
                }
                EpsPolicy::PaperFormula { safety } => {
                    let mut eh = self.eps;
                    loop {
                        let t = record(row, eh)?;
                        row.threshold = t;
                        if eh >= safety * t || row.iterations >= MAX_FIXED_POINT {
                            break eh;
                        }
                        eh = safety * t;
                    }
                }
            }
        } else {
            let t = record(row, 0.0)?;
            row.threshold = t;
            match self.policy {
                EpsPolicy::Fixed { eps_hat } => eps_hat,
                EpsPolicy::PaperFormula { safety } => -(safety * t).min(self.eps),
            }
        };
        row.eps_hat = eps_hat;
        row.event_ok = if exterior { eps_hat >= row.threshold } else { row.threshold <= -eps_hat && -eps_hat <= self.eps };
        let emp = inst.program.empirical(&sample).with_relaxation(if o.m() == 0 { 0.0 } else { eps_hat });
        let (t1, target) = match self.kind {
            ExperimentKind::FixedSetCoverage => (eps_hat, Target::NearOptimal { gamma: 0.0, eps: 2.0 * eps_hat }),
            ExperimentKind::ExteriorMrCoverage => {
                let c = o.mr_constant.ok_or(Error::Missing("metric regularity constant"))?;
                (eps_hat, Target::Exterior { radius: 3.0 * c * eps_hat, level: o.fstar + 3.0 * eps_hat })
            }
            _ => (self.eps, Target::NearOptimal { gamma: 0.0, eps: self.target_eps }),
        };
        let inc = inclusion_check(o, &emp, t1, target, self.budget)?;
        row.conclusion_ok = inc.holds;
        row.violation = inc.violation;
        row.candidates = inc.candidates;
        Ok(())
    }
}

pub fn trial_lineage(seed: u64, n_index: usize, trial: usize) -> SeedLineage {
    SeedLineage::new(seed, ((n_index as u64) << 32) | trial as u64)
}

/// All trials of a coverage config, ordered by (N, trial).
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<Vec<CoverageTrial>> {
    let setup = CoverageSetup::from_config(cfg)?;
    let mut rows = Vec::with_capacity(cfg.trials * cfg.n_schedule.len());
    for (i, &n) in cfg.n_schedule.iter().enumerate() {
        rows.extend(map_indexed(cfg.trials, |k| setup.run_trial(k, n, trial_lineage(cfg.seed, i, k))));
    }
    Ok(rows)
}

/// One row per N. A trial holds when its inclusion was verified; trials
/// with an error count as failures.
pub fn summarize_coverage(rows: &[CoverageTrial], rho: f64) -> Result<Vec<SummaryRow>> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let batch: Vec<&CoverageTrial> = rows.iter().filter(|r| r.n == n).collect();
            let verdicts: Vec<bool> = batch.iter().map(|r| r.conclusion_ok && r.error.is_empty()).collect();
            let c = coverage(&verdicts, rho)?;
            let finite = |f: fn(&CoverageTrial) -> f64| -> Vec<f64> { batch.iter().map(|r| f(r)).filter(|v| v.is_finite()).collect() };
            Ok(SummaryRow {
                kind: batch[0].kind.clone(),
                n,
                trials: batch.len(),
                held: c.wilson.successes,
                premise_held: batch.iter().filter(|r| r.event_ok).count(),
                frequency: c.wilson.frequency,
                wilson_lo: c.wilson.lo,
                wilson_hi: c.wilson.hi,
                level: rho,
                violations: batch.len() - c.wilson.successes,
                errors: batch.iter().filter(|r| !r.error.is_empty()).count(),
                low_power: c.low_power,
                pass: c.pass,
                mean_threshold: mean(&finite(|r| r.threshold)),
                mean_sigma_hat: mean(&finite(|r| r.sigma_hat)),
                mean_a1: mean(&finite(|r| r.a1_objective)),
                median_metric: median(&finite(|r| r.eps_hat)),
            })
        })
        .collect()
}
