//! Deterministic deviation quantities and the perturbation conditions that
//! turn them into inclusions of empirical near-solutions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::parallel::map_indexed;
use crate::problem::{EmpiricalProblem, PopulationOracle};
use crate::rng::SeedLineage;
use crate::sets::{localized_set_spec, relaxed_level_spec, sample_set, Membership, SetLabel, SetSpec};
use crate::solver::{grid_reference, solve_saa, Grid};

/// Smallest sampling budget accepted for a sup-deviation.
pub const MIN_BUDGET: usize = 1000;

/// Pointwise deviations at a pair (y, x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// δ̂(y,x) = 0 ∨ [F̂(y) − F̂(x) − (f(y) − f(x))].
    pub delta_hat: f64,
    /// Δ̂(y,x) = 0 ∨ −[F̂(y) − F̂(x) − (f(y) − f(x))].
    pub big_delta_hat: f64,
    /// The signed deviation inside both positive parts.
    pub raw: f64,
    /// δ̂ᵢ(x) = 0 ∨ [F̂ᵢ(x) − fᵢ(x)] for i = 1..=m (stored at i − 1).
    pub delta_hat_i: Vec<f64>,
    /// Δ̂ᵢ(x) = 0 ∨ [fᵢ(x) − F̂ᵢ(x)].
    pub big_delta_hat_i: Vec<f64>,
}

pub fn deviation_quantities(oracle: &PopulationOracle, emp: &EmpiricalProblem, x: &[f64], y: &[f64]) -> Result<DeviationReport> {
    if oracle.m() != emp.m() {
        return Err(Error::Dimension { expected: oracle.m(), got: emp.m() });
    }
    let raw = pair_raw(oracle, emp, y, x);
    let (mut d, mut big) = (vec![], vec![]);
    for i in 1..=emp.m() {
        let r = emp.fns[i].value(x) - oracle.value(i, x);
        d.push(r.max(0.0));
        big.push((-r).max(0.0));
    }
    Ok(DeviationReport { delta_hat: raw.max(0.0), big_delta_hat: (-raw).max(0.0), raw, delta_hat_i: d, big_delta_hat_i: big })
}

fn pair_raw(oracle: &PopulationOracle, emp: &EmpiricalProblem, y: &[f64], x: &[f64]) -> f64 {
    (emp.fns[0].value(y) - emp.fns[0].value(x)) - (oracle.value(0, y) - oracle.value(0, x))
}

/// δ̂(y,x) alone.
pub fn delta_hat(oracle: &PopulationOracle, emp: &EmpiricalProblem, y: &[f64], x: &[f64]) -> f64 {
    pair_raw(oracle, emp, y, x).max(0.0)
}

/// δ̂ᵢ(x) alone.
pub fn delta_hat_i(oracle: &PopulationOracle, emp: &EmpiricalProblem, i: usize, x: &[f64]) -> f64 {
    (emp.fns[i].value(x) - oracle.value(i, x)).max(0.0)
}

/// The function maximized by a sup-deviation.
#[derive(Debug, Clone, Copy)]
pub enum Integrand<'a> {
    /// t − [F̂(x) − F̂(x*)].
    FixedLevel { xstar: &'a [f64], t: f64 },
    /// Δ̂(x, anchor).
    Objective { anchor: &'a [f64] },
    /// γ − F̂ᵢ(x) with `level = Some(γ)`, otherwise Δ̂ᵢ(x).
    Constraint { i: usize, level: Option<f64> },
}

/// Restriction to X̂ʸ_{t₁} = {z ∈ X̂ : F̂(z) ≤ F̂(y) + t₁}.
#[derive(Debug, Clone, Copy)]
pub struct Filter<'a> {
    pub y: &'a [f64],
    pub t1: f64,
}

/// A sampled sup with its Lipschitz slack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupValue {
    /// 0 ∨ the largest sampled value.
    pub value: f64,
    /// 𝖫·mesh, added when any sampled point qualified.
    pub slack: f64,
    /// First maximizer in sample order.
    pub witness: Option<Vec<f64>>,
    pub evaluated: usize,
    pub qualified: usize,
}

impl SupValue {
    fn empty() -> Self {
        Self { value: 0.0, slack: 0.0, witness: None, evaluated: 0, qualified: 0 }
    }

    /// Conservative value used to decide whether a premise holds.
    pub fn bound(&self) -> f64 {
        self.value + self.slack
    }
}

fn slack(lip: f64, mesh: f64) -> f64 {
    if mesh == 0.0 {
        0.0
    } else {
        lip * mesh
    }
}

/// Maximizes an integrand over sampled points of `set`, optionally filtered
/// by X̂ʸ_{t₁} (relaxed by 𝖫̂·mesh). An empty sample gives 0.
pub fn sup_deviation(
    oracle: &PopulationOracle,
    emp: &EmpiricalProblem,
    set: &SetSpec,
    integrand: Integrand<'_>,
    filter: Option<Filter<'_>>,
    budget: usize,
) -> Result<SupValue> {
    if budget < MIN_BUDGET {
        return Err(invalid(format!("sup-deviation budget must be at least {MIN_BUDGET}, got {budget}")));
    }
    let sample = sample_set(set, budget, &SeedLineage::new(0x5a9, 0));
    let lip_hat = |i: usize| emp.lipschitz(i);
    let lip_pop = |i: usize| oracle.lipschitz(i).unwrap_or(f64::INFINITY);
    let value = |x: &[f64]| -> f64 {
        match integrand {
            Integrand::FixedLevel { xstar, t } => t - (emp.fns[0].value(x) - emp.fns[0].value(xstar)),
            Integrand::Objective { anchor } => (-pair_raw(oracle, emp, x, anchor)).max(0.0),
            Integrand::Constraint { i, level: Some(g) } => g - emp.fns[i].value(x),
            Integrand::Constraint { i, level: None } => (oracle.value(i, x) - emp.fns[i].value(x)).max(0.0),
        }
    };
    let lip = match integrand {
        Integrand::FixedLevel { .. } => lip_hat(0),
        Integrand::Objective { .. } => lip_hat(0) + lip_pop(0),
        Integrand::Constraint { i, level: Some(_) } => lip_hat(i),
        Integrand::Constraint { i, level: None } => lip_hat(i) + lip_pop(i),
    };
    let passes = |x: &[f64]| -> bool {
        let Some(f) = filter else { return true };
        let h = sample.mesh;
        emp.hard_set.contains(x)
            && (1..=emp.m()).all(|i| emp.fns[i].value(x) <= emp.relaxation + slack(lip_hat(i), h))
            && emp.fns[0].value(x) <= emp.fns[0].value(f.y) + f.t1 + slack(lip_hat(0), h)
    };
    let mut out = SupValue::empty();
    out.evaluated = sample.evaluated;
    let mut best = f64::NEG_INFINITY;
    for p in &sample.members {
        if !passes(p) {
            continue;
        }
        out.qualified += 1;
        let v = value(p);
        if v > best {
            best = v;
            out.witness = Some(p.clone());
        }
    }
    if out.qualified > 0 {
        out.value = best.max(0.0);
        out.slack = slack(lip, sample.mesh);
    }
    Ok(out)
}

/// What a theorem concludes about X̂*_{t₁}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "kebab-case")]
pub enum Target {
    /// (X_γ)*_ε: fᵢ ≤ γ and f ≤ min_{X_γ} f + ε.
    NearOptimal { gamma: f64, eps: f64 },
    /// dist(·, X) ≤ radius and f ≤ level.
    Exterior { radius: f64, level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionResult {
    pub holds: bool,
    /// Worst violation found; ≤ 0 when the inclusion held everywhere.
    pub violation: f64,
    pub witness: Option<Vec<f64>>,
    pub candidates: usize,
    /// min of the empirical program, absent when X̂ is empty.
    pub fhat_star: Option<f64>,
}

/// Searches X̂*_{t₁} for a point outside the target: every grid point of the
/// set and boundary points along rays from the empirical minimizer.
pub fn inclusion_check(oracle: &Arc<PopulationOracle>, emp: &EmpiricalProblem, t1: f64, target: Target, budget: usize) -> Result<InclusionResult> {
    if !(t1 >= 0.0) {
        return Err(invalid(format!("t1 must be nonnegative, got {t1}")));
    }
    let d = emp.hard_set.dim();
    let (grid_min, argmin) = match grid_reference(emp) {
        Ok(r) => r,
        Err(Error::EmptySet) => {
            return Ok(InclusionResult { holds: true, violation: f64::NEG_INFINITY, witness: None, candidates: 0, fhat_star: None })
        }
        Err(e) => return Err(e),
    };
    let mut fhat = (grid_min, argmin);
    if let Ok(s) = solve_saa(emp, 1e-9, 1e-12, 2000) {
        if s.objective < fhat.0 && emp.residual(&s.x) == 0.0 && emp.hard_set.contains_strict(&s.x) {
            fhat = (s.objective, s.x);
        }
    }
    let tau = 1e-9 * (1.0 + fhat.0.abs());
    let level_hat = fhat.0 + t1 - tau;
    let member = |x: &[f64]| emp.hard_set.contains_strict(x) && emp.residual(x) == 0.0 && emp.fns[0].value(x) <= level_hat;

    let (level, tol_obj, tol_con) = match target {
        Target::NearOptimal { gamma, eps } => {
            let (min, _) = oracle.relaxed_min(gamma)?;
            let level = min + eps;
            (level, 1e-7 * (1.0 + level.abs()), 1e-7 * (1.0 + gamma.abs()))
        }
        Target::Exterior { radius, level } => {
            if oracle.feasible_set().is_none() {
                return Err(Error::Missing("projection onto X"));
            }
            (level, 1e-7 * (1.0 + level.abs()), 1e-7 * (1.0 + radius.abs()))
        }
    };
    let violation = |x: &[f64]| -> f64 {
        let obj = (oracle.value(0, x) - level) / tol_obj;
        let con = match target {
            Target::NearOptimal { gamma, .. } => (1..=oracle.m()).map(|i| oracle.value(i, x) - gamma).fold(f64::NEG_INFINITY, f64::max),
            Target::Exterior { radius, .. } => oracle.dist_to_feasible(x).unwrap_or(f64::INFINITY) - radius,
        } / tol_con;
        obj.max(con)
    };

    let per_side = match d {
        1 => 4001,
        2 => 201,
        3 => 41,
        _ => return Err(invalid(format!("inclusion check needs d <= 3, got {d}"))),
    };
    let (lo, hi) = emp.hard_set.bounding_box();
    let grid = Grid::new(&lo, &hi, (hi[0] - lo[0]) / (per_side - 1) as f64);
    const CHUNK: usize = 4096;
    let chunks = grid.len().div_ceil(CHUNK);
    let partial: Vec<(usize, f64, Option<Vec<f64>>)> = map_indexed(chunks, |c| {
        let mut p = vec![0.0; d];
        let mut acc = (0usize, f64::NEG_INFINITY, None);
        for idx in c * CHUNK..((c + 1) * CHUNK).min(grid.len()) {
            grid.point(idx, &mut p);
            if member(&p) {
                acc.0 += 1;
                let v = violation(&p);
                if v > acc.1 {
                    acc.1 = v;
                    acc.2 = Some(p.clone());
                }
            }
        }
        acc
    });
    let mut candidates = 0;
    let mut worst = (f64::NEG_INFINITY, None);
    for (n, v, w) in partial {
        candidates += n;
        if v > worst.0 {
            worst = (v, w);
        }
    }
    let origin = fhat.1.clone();
    let owned = emp.clone();
    let body: Membership = Arc::new(move |x: &[f64]| {
        owned.hard_set.contains_strict(x) && owned.residual(x) == 0.0 && owned.fns[0].value(x) <= level_hat
    });
    let mut boundary = vec![origin.clone()];
    if body(&origin) {
        let spec = SetSpec::new(SetLabel::Custom, t1, emp.hard_set.center.clone(), emp.hard_set.circumradius(), body.clone())
            .with_body(body, origin);
        boundary.extend(sample_set(&spec, budget.max(MIN_BUDGET), &SeedLineage::new(0x1c, 0)).boundary);
    }
    for p in &boundary {
        candidates += 1;
        let v = violation(p);
        if v > worst.0 {
            worst = (v, Some(p.clone()));
        }
    }
    let holds = worst.0 <= 1.0;
    Ok(InclusionResult {
        holds,
        violation: worst.0,
        witness: if holds { None } else { worst.1 },
        candidates,
        fhat_star: Some(fhat.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionKind {
    FixedConstraints,
    PerturbedConstraints,
    ExteriorMr,
    InteriorScq,
    InteriorSolution,
}

/// One inequality of a premise bundle: holds iff lhs ≤ rhs (or < when strict).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub strict: bool,
    pub holds: bool,
}

impl Flag {
    fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, strict: false, holds: lhs <= rhs }
    }
    fn lt(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, strict: true, holds: lhs < rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kind: ConditionKind,
    pub flags: Vec<Flag>,
    pub sups: Vec<(String, SupValue)>,
    /// Set when the witnesses or parameter ranges the result needs fail.
    pub premise_invalid: Option<String>,
    pub premises_hold: bool,
    pub t1: f64,
    pub target: Option<Target>,
    /// Tested only when the premises hold.
    pub conclusion: Option<InclusionResult>,
}

impl ConditionReport {
    fn new(kind: ConditionKind, t1: f64) -> Self {
        Self { kind, flags: vec![], sups: vec![], premise_invalid: None, premises_hold: false, t1, target: None, conclusion: None }
    }

    fn invalid(mut self, why: impl Into<String>) -> Self {
        self.premise_invalid = Some(why.into());
        self
    }

    /// Whether every flag whose name starts with `prefix` holds.
    pub fn flag(&self, prefix: &str) -> Option<bool> {
        let mut seen = false;
        let mut all = true;
        for f in self.flags.iter().filter(|f| f.name.starts_with(prefix)) {
            seen = true;
            all &= f.holds;
        }
        seen.then_some(all)
    }

    /// Premises held but the conclusion failed.
    pub fn is_counterexample(&self) -> bool {
        self.premises_hold && self.conclusion.as_ref().is_some_and(|c| !c.holds)
    }

    fn finish(mut self, oracle: &Arc<PopulationOracle>, emp: &EmpiricalProblem, target: Target, budget: usize) -> Result<Self> {
        self.target = Some(target);
        self.premises_hold = self.premise_invalid.is_none() && self.flags.iter().all(|f| f.holds);
        if self.premises_hold {
            self.conclusion = Some(inclusion_check(oracle, emp, self.t1, target, budget)?);
        }
        Ok(self)
    }
}

/// C0: t₁ ≤ t − Δ̂(x*|t), concluding X̂*_{t₁} ⊂ X*_t.
pub fn check_c0(oracle: &Arc<PopulationOracle>, emp: &EmpiricalProblem, xstar: &[f64], t: f64, t1: f64, budget: usize) -> Result<ConditionReport> {
    if !(t > 0.0) {
        return Err(invalid(format!("t must be positive, got {t}")));
    }
    if emp.m() != 0 || oracle.m() != 0 {
        return Err(invalid("C0 applies to programs without stochastic constraints"));
    }
    let mut r = ConditionReport::new(ConditionKind::FixedConstraints, t1);
    let set = localized_set_spec(oracle, SetLabel::LevelObjective, t)?;
    let sup = sup_deviation(oracle, emp, &set, Integrand::FixedLevel { xstar, t }, None, budget)?;
    r.flags.push(Flag::le("C0", t1, t - sup.bound()));
    r.sups.push(("Delta(x*|t)".into(), sup));
    r.finish(oracle, emp, Target::NearOptimal { gamma: 0.0, eps: t }, budget)
}

/// Inputs of the perturbed-constraint conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionParameters {
    pub t: f64,
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
    pub gamma: f64,
    pub xstar: Vec<f64>,
    pub ystar: Vec<f64>,
}

impl ConditionParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0 && self.t0 >= 0.0 && self.t2 >= 0.0 && self.t >= self.t0 && self.gamma >= 0.0) {
            return Err(invalid(format!(
                "need t1 > 0, t0, t2 >= 0, t >= t0, gamma >= 0; got t={}, t0={}, t1={}, t2={}, gamma={}",
                self.t, self.t0, self.t1, self.t2, self.gamma
            )));
        }
        Ok(())
    }
}

/// The set-up that reduces the exterior corollary to the general conditions.
pub fn exterior_parameters(oracle: &PopulationOracle, eps_hat: f64) -> Result<ConditionParameters> {
    let gamma = 3.0 * eps_hat;
    let (min, _) = oracle.relaxed_min(gamma)?;
    Ok(ConditionParameters {
        t: gamma,
        t0: 0.0,
        t1: eps_hat,
        t2: (oracle.fstar - min).max(0.0),
        gamma,
        xstar: oracle.xstar.clone(),
        ystar: oracle.xstar.clone(),
    })
}

/// C1–C3 with x* ∈ (X_γ)*_{t₂} and y* ∈ X_γ, concluding X̂*_{t₁} ⊂ (X_γ)*_{t+t₂}.
pub fn check_c1_c2_c3(oracle: &Arc<PopulationOracle>, emp: &EmpiricalProblem, p: &ConditionParameters, budget: usize) -> Result<ConditionReport> {
    p.validate()?;
    let m = emp.m();
    if m == 0 || oracle.m() != m {
        return Err(Error::NoConstraints);
    }
    let eps_hat = emp.relaxation;
    let mut r = ConditionReport::new(ConditionKind::PerturbedConstraints, p.t1);
    let target = Target::NearOptimal { gamma: p.gamma, eps: p.t + p.t2 };
    r.target = Some(target);
    for (name, x) in [("x*", &p.xstar), ("y*", &p.ystar)] {
        if !(oracle.hard_set.contains(x) && oracle.in_relaxed(x, p.gamma)) {
            return Ok(r.invalid(format!("{name} is outside X_gamma")));
        }
    }
    let (min, _) = oracle.relaxed_min(p.gamma)?;
    let fx = oracle.value(0, &p.xstar);
    let fy = oracle.value(0, &p.ystar);
    let tol = 1e-12 * (1.0 + min.abs());
    if fx > min + p.t2 + tol {
        return Ok(r.invalid("x* is not a t2-solution over X_gamma"));
    }
    if fy > fx + p.t0 + tol {
        return Ok(r.invalid("f(y*) exceeds f(x*) + t0"));
    }
    if let Some(i) = (1..=m).find(|&i| !(oracle.value(i, &p.ystar) < eps_hat)) {
        return Ok(r.invalid(format!("f_{i}(y*) is not below the relaxation")));
    }

    let filter = Some(Filter { y: &p.ystar, t1: p.t1 });
    let set0 = relaxed_level_spec(oracle, p.gamma, p.t + p.t2, None)?;
    let sup0 = sup_deviation(oracle, emp, &set0, Integrand::Objective { anchor: &p.xstar }, filter, budget)?;
    let dyx = delta_hat(oracle, emp, &p.ystar, &p.xstar);
    r.flags.push(Flag::le("C1", p.t1, p.t - p.t0 - dyx - sup0.bound()));
    r.sups.push(("Delta_0,gamma".into(), sup0));
    for i in 1..=m {
        let set = relaxed_level_spec(oracle, p.gamma, p.t + p.t2, Some(i))?;
        let sup = sup_deviation(oracle, emp, &set, Integrand::Constraint { i, level: Some(p.gamma) }, filter, budget)?;
        r.flags.push(Flag::le(format!("C2[{i}]"), sup.bound(), p.gamma - eps_hat));
        r.sups.push((format!("Delta_{i},gamma"), sup));
    }
    for i in 1..=m {
        r.flags.push(Flag::lt(format!("C3[{i}]"), delta_hat_i(oracle, emp, i, &p.ystar), eps_hat - oracle.value(i, &p.ystar)));
    }
    r.finish(oracle, emp, target, budget)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corollary {
    /// Metric regularity, ε̂ > 0: X̂*_ε̂ ⊂ X + 3𝔠ε̂𝔹 with f ≤ f* + 3ε̂.
    ExteriorMr,
    /// Slater point, ε̂ ≥ −ε: X̂*_ε ⊂ X*_{2ε+gap(2ε)}.
    InteriorScq,
    /// Strictly feasible solution y* = x*: X̂*_ε ⊂ X*_{2ε}.
    InteriorSolution,
}

/// Evaluates a corollary's premise bundle and, when it holds, its conclusion.
/// `eps` is ignored by [`Corollary::ExteriorMr`], which uses ε̂.
pub fn check_corollary(oracle: &Arc<PopulationOracle>, emp: &EmpiricalProblem, which: Corollary, eps: f64, budget: usize) -> Result<ConditionReport> {
    let m = emp.m();
    if m == 0 || oracle.m() != m {
        return Err(Error::NoConstraints);
    }
    let eps_hat = emp.relaxation;
    let xstar = oracle.xstar.clone();
    match which {
        Corollary::ExteriorMr => {
            if !(eps_hat > 0.0) {
                return Err(invalid(format!("the exterior corollary needs a positive relaxation, got {eps_hat}")));
            }
            let c = oracle.mr_constant.ok_or(Error::Missing("metric regularity constant"))?;
            let g = 3.0 * eps_hat;
            let mut r = ConditionReport::new(ConditionKind::ExteriorMr, eps_hat);
            let set0 = localized_set_spec(oracle, SetLabel::ExteriorLevelObjective, g)?;
            let sup0 = sup_deviation(oracle, emp, &set0, Integrand::Objective { anchor: &xstar }, None, budget)?;
            r.flags.push(Flag::le("P1", sup0.bound(), 2.0 * eps_hat));
            r.sups.push(("sup Delta over XX*_0".into(), sup0));
            for i in 1..=m {
                let set = localized_set_spec(oracle, SetLabel::ExteriorActiveConstraint(i), g)?;
                let sup = sup_deviation(oracle, emp, &set, Integrand::Constraint { i, level: None }, None, budget)?;
                r.flags.push(Flag::le(format!("P2[{i}]"), sup.bound(), 2.0 * eps_hat));
                r.sups.push((format!("sup Delta_{i} over XX*_{i}"), sup));
            }
            for i in 1..=m {
                r.flags.push(Flag::lt(format!("P3[{i}]"), delta_hat_i(oracle, emp, i, &xstar), eps_hat));
            }
            r.finish(oracle, emp, Target::Exterior { radius: 3.0 * c * eps_hat, level: oracle.fstar + g }, budget)
        }
        Corollary::InteriorScq | Corollary::InteriorSolution => {
            if !(eps > 0.0) {
                return Err(invalid(format!("eps must be positive, got {eps}")));
            }
            let kind = if which == Corollary::InteriorScq { ConditionKind::InteriorScq } else { ConditionKind::InteriorSolution };
            let mut r = ConditionReport::new(kind, eps);
            if eps_hat < -eps {
                return Ok(r.invalid("relaxation below -eps"));
            }
            let (ystar, labels, extra, target_eps) = if which == Corollary::InteriorScq {
                let slack = match &oracle.slater {
                    Some(s) => s.slack,
                    None => return Ok(r.invalid("no Slater point")),
                };
                if eps > slack / 2.0 {
                    return Ok(r.invalid("eps exceeds half the Slater slack"));
                }
                let Ok((_, y)) = oracle.relaxed_min(-2.0 * eps) else {
                    return Ok(r.invalid("X_{-2eps} is empty"));
                };
                let gap = oracle.gap(2.0 * eps)?;
                let dyx = delta_hat(oracle, emp, &y, &xstar);
                (y, (SetLabel::GapLevelObjective, SetLabel::GapActiveConstraint as fn(usize) -> SetLabel), dyx, 2.0 * eps + gap)
            } else {
                let ring = (1..=m).map(|i| -oracle.value(i, &xstar)).fold(f64::INFINITY, f64::min);
                if !(ring > 0.0) {
                    return Ok(r.invalid("the solution is not strictly feasible"));
                }
                if eps > ring / 2.0 {
                    return Ok(r.invalid("eps exceeds half the constraint slack at the solution"));
                }
                (xstar.clone(), (SetLabel::LevelObjective, SetLabel::ActiveConstraint as fn(usize) -> SetLabel), 0.0, 2.0 * eps)
            };
            let set0 = localized_set_spec(oracle, labels.0, 2.0 * eps)?;
            let sup0 = sup_deviation(oracle, emp, &set0, Integrand::Objective { anchor: &xstar }, None, budget)?;
            r.flags.push(Flag::le("P1", extra + sup0.bound(), eps));
            r.sups.push(("sup Delta over level set".into(), sup0));
            for i in 1..=m {
                let set = localized_set_spec(oracle, (labels.1)(i), 2.0 * eps)?;
                let sup = sup_deviation(oracle, emp, &set, Integrand::Constraint { i, level: None }, None, budget)?;
                r.flags.push(Flag::le(format!("P2[{i}]"), sup.bound(), -eps_hat));
                r.sups.push((format!("sup Delta_{i} over active set"), sup));
            }
            for i in 1..=m {
                r.flags.push(Flag::lt(format!("P3[{i}]"), delta_hat_i(oracle, emp, i, &ystar), eps));
            }
            r.finish(oracle, emp, Target::NearOptimal { gamma: 0.0, eps: target_eps }, budget)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{EmpiricalLoss, FnFunction, Growth, HardSet, HardSetKind, PopulationFn};
    use proptest::prelude::*;

    fn linear_oracle() -> Arc<PopulationOracle> {
        let y = HardSet::new(HardSetKind::Box, vec![0.5], 0.5).unwrap();
        let f: Arc<dyn PopulationFn> = Arc::new(FnFunction::affine(vec![1.0], 0.0));
        Arc::new(PopulationOracle::new(y, f, vec![]).unwrap().with_growth(Growth::Sharp { kappa: 1.0 }))
    }

    fn emp_of(oracle: &PopulationOracle, fns: Vec<FnFunction>, relaxation: f64) -> EmpiricalProblem {
        let fns: Vec<Arc<dyn EmpiricalLoss>> = fns.into_iter().map(|f| Arc::new(f) as Arc<dyn EmpiricalLoss>).collect();
        EmpiricalProblem::from_functions(oracle.hard_set.clone(), fns, relaxation)
    }

    #[test]
    fn pointwise_examples() {
        let y = HardSet::new(HardSetKind::Box, vec![0.0], 2.0).unwrap();
        let f: Arc<dyn PopulationFn> = Arc::new(FnFunction::affine(vec![1.0], 0.0));
        let c: Arc<dyn PopulationFn> = Arc::new(FnFunction::affine(vec![1.0], -1.0));
        let o = PopulationOracle::new(y, f, vec![c]).unwrap();
        let same = emp_of(&o, vec![FnFunction::affine(vec![1.0], 0.0), FnFunction::affine(vec![1.0], -1.0)], 0.0);
        let r = deviation_quantities(&o, &same, &[0.3], &[-0.7]).unwrap();
        assert_eq!((r.delta_hat, r.big_delta_hat, r.delta_hat_i[0], r.big_delta_hat_i[0]), (0.0, 0.0, 0.0, 0.0));
        let shifted = emp_of(&o, vec![FnFunction::affine(vec![1.0], 5.0), FnFunction::affine(vec![1.0], -0.9)], 0.0);
        let r = deviation_quantities(&o, &shifted, &[0.0], &[1.0]).unwrap();
        assert!(r.delta_hat.abs() < 1e-15 && r.big_delta_hat.abs() < 1e-15);
        assert!((r.delta_hat_i[0] - 0.1).abs() < 1e-12 && r.big_delta_hat_i[0] == 0.0);
    }

    #[test]
    fn adversarial_one_dimensional_case() {
        let o = linear_oracle();
        let emp = emp_of(&o, vec![FnFunction::affine(vec![-1.0], 0.0)], 0.0);
        let set = localized_set_spec(&o, SetLabel::LevelObjective, 0.2).unwrap();
        let s = sup_deviation(&o, &emp, &set, Integrand::FixedLevel { xstar: &[0.0], t: 0.2 }, None, 1000).unwrap();
        assert!((s.value - 0.4).abs() < 1e-9, "{}", s.value);
        assert_eq!(s.slack, 0.0);
        for t1 in [1e-3, 0.05, 0.2] {
            let r = check_c0(&o, &emp, &[0.0], 0.2, t1, 1000).unwrap();
            assert_eq!(r.flag("C0"), Some(false));
            assert!(r.conclusion.is_none());
        }
        let inc = inclusion_check(&o, &emp, 0.1, Target::NearOptimal { gamma: 0.0, eps: 0.05 }, 1000).unwrap();
        assert!(!inc.holds);
        assert!(inc.witness.unwrap()[0] > 0.9);
    }

    #[test]
    fn unperturbed_c0_holds() {
        let o = linear_oracle();
        let emp = emp_of(&o, vec![FnFunction::affine(vec![1.0], 0.0)], 0.0);
        let r = check_c0(&o, &emp, &[0.0], 0.2, 0.1, 1000).unwrap();
        assert!(r.premises_hold && r.conclusion.as_ref().unwrap().holds);
        let eq = check_c0(&o, &emp, &[0.0], 0.2, 0.2, 1000).unwrap();
        assert!(eq.premises_hold && eq.flags[0].lhs == eq.flags[0].rhs);
        assert!(eq.conclusion.unwrap().holds);
    }

    #[test]
    fn empty_active_set_gives_zero() {
        let y = HardSet::new(HardSetKind::Box, vec![0.0], 1.0).unwrap();
        let f: Arc<dyn PopulationFn> = Arc::new(FnFunction::affine(vec![1.0], 0.0));
        let c: Arc<dyn PopulationFn> = Arc::new(FnFunction::affine(vec![1.0], -5.0));
        let o = Arc::new(PopulationOracle::new(y, f, vec![c]).unwrap());
        let emp = emp_of(&o, vec![FnFunction::affine(vec![1.0], 0.0), FnFunction::affine(vec![1.0], -9.0)], 0.0);
        let set = localized_set_spec(&o, SetLabel::ActiveConstraint(1), 0.1).unwrap();
        let s = sup_deviation(&o, &emp, &set, Integrand::Constraint { i: 1, level: None }, None, 1000).unwrap();
        assert_eq!((s.value, s.qualified), (0.0, 0));
        assert!(sup_deviation(&o, &emp, &set, Integrand::Constraint { i: 1, level: None }, None, 10).is_err());
    }

    fn halfspace_instance() -> Arc<PopulationOracle> {
        // min |x − 0.5| over [−1, 1] with x ≤ 0.25.
        let y = HardSet::new(HardSetKind::Box, vec![0.0], 1.0).unwrap();
        let f: Arc<dyn PopulationFn> = Arc::new(FnFunction::distance_minus(vec![0.5], 0.0));
        let c: Arc<dyn PopulationFn> = Arc::new(FnFunction::affine(vec![1.0], -0.25));
        Arc::new(
            PopulationOracle::new(y, f, vec![c])
                .unwrap()
                .with_mr_constant(1.0)
                .with_growth(Growth::Sharp { kappa: 1.0 })
                .with_slater_point(vec![-0.5])
                .unwrap(),
        )
    }

    fn exact_emp(o: &PopulationOracle, relaxation: f64) -> EmpiricalProblem {
        emp_of(o, vec![FnFunction::distance_minus(vec![0.5], 0.0), FnFunction::affine(vec![1.0], -0.25)], relaxation)
    }

    #[test]
    fn unperturbed_general_conditions() {
        let o = halfspace_instance();
        let emp = exact_emp(&o, 0.05);
        let p = exterior_parameters(&o, 0.05).unwrap();
        let r = check_c1_c2_c3(&o, &emp, &p, 1000).unwrap();
        assert!(r.premises_hold, "{:?}", r.flags);
        assert!(r.conclusion.unwrap().holds);
        // y* strictly feasible, γ = 0, negative relaxation.
        let emp = exact_emp(&o, -0.05);
        let p = ConditionParameters { t: 0.3, t0: 0.2, t1: 0.05, t2: 0.0, gamma: 0.0, xstar: vec![0.25], ystar: vec![0.05] };
        let r = check_c1_c2_c3(&o, &emp, &p, 1000).unwrap();
        assert!(r.premises_hold, "{:?}", r.flags);
        assert!(r.conclusion.unwrap().holds);
    }

    #[test]
    fn premise_invalid_at_equality() {
        let o = halfspace_instance();
        let emp = exact_emp(&o, 0.0);
        // f₁(y*) = 0 = ε̂: the strict inequality fails.
        let p = ConditionParameters { t: 0.3, t0: 0.0, t1: 0.05, t2: 0.0, gamma: 0.0, xstar: vec![0.25], ystar: vec![0.25] };
        let r = check_c1_c2_c3(&o, &emp, &p, 1000).unwrap();
        assert!(r.premise_invalid.is_some() && !r.premises_hold && r.conclusion.is_none());
    }

    #[test]
    fn corollaries_on_unperturbed_data() {
        let o = halfspace_instance();
        let r = check_corollary(&o, &exact_emp(&o, 0.05), Corollary::ExteriorMr, 0.0, 1000).unwrap();
        assert!(r.premises_hold && r.conclusion.as_ref().unwrap().holds, "{:?}", r.flags);
        assert_eq!(r.target, Some(Target::Exterior { radius: 3.0 * 0.05, level: o.fstar + 0.15 }));
        let r = check_corollary(&o, &exact_emp(&o, -0.05), Corollary::InteriorScq, 0.05, 1000).unwrap();
        assert!(r.premises_hold && r.conclusion.as_ref().unwrap().holds, "{:?}", r.flags);
        let Some(Target::NearOptimal { eps, .. }) = r.target else { panic!() };
        assert!((eps - (0.1 + o.gap(0.1).unwrap())).abs() < 1e-12);
        // The solution sits on the constraint: the interior-solution premise fails.
        let r = check_corollary(&o, &exact_emp(&o, 0.0), Corollary::InteriorSolution, 0.05, 1000).unwrap();
        assert!(r.premise_invalid.is_some());
    }

    #[test]
    fn corollary_premises_imply_general_conditions() {
        let o = halfspace_instance();
        for shift in [0.0, 0.01, 0.03] {
            let emp = emp_of(
                &o,
                vec![FnFunction::new(move |x| (x[0] - 0.5).abs() + shift * x[0], move |x| vec![(x[0] - 0.5).signum() + shift], 1.1), FnFunction::affine(vec![1.0], -0.25 + shift)],
                0.05,
            );
            let cor = check_corollary(&o, &emp, Corollary::ExteriorMr, 0.0, 1000).unwrap();
            let gen = check_c1_c2_c3(&o, &emp, &exterior_parameters(&o, 0.05).unwrap(), 1000).unwrap();
            if cor.premises_hold {
                assert!(gen.premises_hold, "{shift}: {:?}", gen.flags);
            }
        }
    }

    #[test]
    fn inclusion_agrees_with_grid_oracle_in_2d() {
        let y = HardSet::unit_ball(2);
        let f: Arc<dyn PopulationFn> =
            Arc::new(FnFunction::new(|x| (x[0] - 0.2).powi(2) + (x[1] + 0.1).powi(2), |x| vec![2.0 * (x[0] - 0.2), 2.0 * (x[1] + 0.1)], 4.0));
        let o = Arc::new(PopulationOracle::new(y, f, vec![]).unwrap());
        for (a, b) in [(0.05, -0.02), (0.3, 0.1), (-0.2, 0.25)] {
            let emp = emp_of(
                &o,
                vec![FnFunction::new(
                    move |x| (x[0] - 0.2 - a).powi(2) + (x[1] + 0.1 - b).powi(2),
                    move |x| vec![2.0 * (x[0] - 0.2 - a), 2.0 * (x[1] + 0.1 - b)],
                    4.0,
                )],
                0.0,
            );
            for eps in [0.01, 0.1, 0.4] {
                let r = inclusion_check(&o, &emp, 0.05, Target::NearOptimal { gamma: 0.0, eps }, 1000).unwrap();
                // X̂*_{0.05} is a disc of radius √0.05 around the shifted centre.
                let far = (a * a + b * b).sqrt() + 0.05f64.sqrt();
                let truth = far * far <= eps;
                if (far * far - eps).abs() > 1e-3 {
                    assert_eq!(r.holds, truth, "{a} {b} {eps}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn positive_part_algebra(x in -1.0f64..1.0, y in -1.0f64..1.0, s in -2.0f64..2.0) {
            let o = linear_oracle();
            let emp = emp_of(&o, vec![FnFunction::new(move |z| z[0] + s * z[0] * z[0], move |z| vec![1.0 + 2.0 * s * z[0]], 5.0)], 0.0);
            let r = deviation_quantities(&o, &emp, &[x.abs() / 2.0], &[y.abs() / 2.0]).unwrap();
            prop_assert_eq!(r.delta_hat * r.big_delta_hat, 0.0);
            prop_assert!((r.delta_hat - r.big_delta_hat - r.raw).abs() < 1e-15);
        }
    }
}
