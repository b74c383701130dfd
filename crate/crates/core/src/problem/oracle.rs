//! Ground truth for synthetic instances: exact fᵢ, f*, x*, 𝔠, Slater data,
//! projections onto X and cached relaxed minima.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::hardset::{dist, HardSet};
use super::loss::PopulationFn;
use super::simple::{project_onto, SimpleSet};
use crate::error::{Error, Result};
use crate::solver::grid;

/// Growth of f away from x* on X, used to bound localized sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Growth {
    /// f(x) − f* ≥ κ‖x − x*‖.
    Sharp { kappa: f64 },
    /// f(x) − f* ≥ (μ/2)‖x − x*‖².
    Quadratic { modulus: f64 },
}

impl Growth {
    /// Radius around x* containing {x ∈ X : f(x) ≤ f* + s}.
    pub fn radius(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match *self {
            Growth::Sharp { kappa } => s / kappa,
            Growth::Quadratic { modulus } => (2.0 * s / modulus).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlaterPoint {
    pub point: Vec<f64>,
    pub slack: f64,
}

pub struct PopulationOracle {
    pub hard_set: HardSet,
    pub objective: Arc<dyn PopulationFn>,
    pub constraints: Vec<Arc<dyn PopulationFn>>,
    pub xstar: Vec<f64>,
    pub fstar: f64,
    pub mr_constant: Option<f64>,
    pub slater: Option<SlaterPoint>,
    pub growth: Option<Growth>,
    feasible_set: Option<SimpleSet>,
    cache: Mutex<Vec<(u64, Option<(f64, Vec<f64>)>)>>,
}

impl std::fmt::Debug for PopulationOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PopulationOracle")
            .field("dim", &self.dim())
            .field("m", &self.m())
            .field("xstar", &self.xstar)
            .field("fstar", &self.fstar)
            .field("mr_constant", &self.mr_constant)
            .field("slater", &self.slater)
            .field("growth", &self.growth)
            .finish()
    }
}

impl PopulationOracle {
    /// Builds the oracle and locates (x*, f*) by grid search with refinement.
    pub fn new(
        hard_set: HardSet,
        objective: Arc<dyn PopulationFn>,
        constraints: Vec<Arc<dyn PopulationFn>>,
    ) -> Result<Self> {
        let feasible_set = constraints
            .iter()
            .map(|c| c.sublevel(0.0))
            .collect::<Option<Vec<_>>>()
            .map(SimpleSet::Intersection);
        let mut oracle = Self {
            hard_set,
            objective,
            constraints,
            xstar: Vec::new(),
            fstar: f64::NAN,
            mr_constant: None,
            slater: None,
            growth: None,
            feasible_set,
            cache: Mutex::new(Vec::new()),
        };
        let (fstar, xstar) = oracle.relaxed_min(0.0)?;
        oracle.fstar = fstar;
        oracle.xstar = xstar;
        Ok(oracle)
    }

    /// Overrides the located solution with a known closed form.
    pub fn with_solution(mut self, xstar: Vec<f64>) -> Self {
        self.fstar = self.objective.value(&xstar);
        self.xstar = xstar;
        self
    }

    pub fn with_mr_constant(mut self, c: f64) -> Self {
        self.mr_constant = Some(c);
        self
    }

    pub fn with_growth(mut self, g: Growth) -> Self {
        self.growth = Some(g);
        self
    }

    pub fn with_slater_point(mut self, point: Vec<f64>) -> Result<Self> {
        let slack = self.slater_slack(&point)?;
        self.slater = Some(SlaterPoint { point, slack });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.hard_set.dim()
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    /// f₀ for i = 0, fᵢ otherwise.
    pub fn function(&self, i: usize) -> &Arc<dyn PopulationFn> {
        if i == 0 {
            &self.objective
        } else {
            &self.constraints[i - 1]
        }
    }

    pub fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.function(i).value(x)
    }

    /// Lipschitz constant P𝖫ᵢ of fᵢ when known.
    pub fn lipschitz(&self, i: usize) -> Option<f64> {
        self.function(i).envelope_mean()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        if !self.hard_set.contains(x) {
            return Err(Error::OutsideHardSet);
        }
        Ok(())
    }

    fn max_constraint(&self, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.value(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// max_i [fᵢ(x) − γ]₊.
    pub fn feasibility_residual(&self, x: &[f64], gamma: f64) -> Result<f64> {
        self.check(x)?;
        Ok((self.max_constraint(x) - gamma).max(0.0))
    }

    pub fn in_relaxed(&self, x: &[f64], gamma: f64) -> bool {
        self.constraints.iter().all(|c| c.value(x) <= gamma)
    }

    /// Whether x ∈ (X_γ)*_ε.
    pub fn near_optimal_membership(&self, x: &[f64], eps: f64, gamma: f64) -> Result<bool> {
        self.check(x)?;
        if !(eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be nonnegative, got {eps}")));
        }
        let (min, _) = self.relaxed_min(gamma)?;
        if !self.in_relaxed(x, gamma) {
            return Ok(false);
        }
        let fx = self.objective.value(x);
        Ok(eps.is_infinite() || fx <= min + eps + 1e-12 * (1.0 + min.abs()))
    }

    /// min over X_γ = {x ∈ Y : fᵢ(x) ≤ γ} and a minimizer.
    pub fn relaxed_min(&self, gamma: f64) -> Result<(f64, Vec<f64>)> {
        let key = gamma.to_bits();
        if let Some((_, hit)) = self.cache.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return hit.clone().ok_or(Error::InfeasibleRelaxation { gamma });
        }
        let computed = self.compute_relaxed_min(gamma);
        let stored = computed.as_ref().ok().cloned();
        self.cache.lock().unwrap().push((key, stored));
        computed
    }

    fn compute_relaxed_min(&self, gamma: f64) -> Result<(f64, Vec<f64>)> {
        let d = self.dim();
        let per_side = match d {
            1 => 20_001,
            2 => 401,
            3 => 61,
            _ => return Err(Error::InvalidParameter(format!("grid search needs d <= 3, got {d}"))),
        };
        let (lo, hi) = self.hard_set.bounding_box();
        let mesh = (hi[0] - lo[0]) / (per_side - 1) as f64;
        let f = |x: &[f64]| self.objective.value(x);
        let feasible = |x: &[f64]| self.hard_set.contains_strict(x) && self.in_relaxed(x, gamma);
        let coarse = grid::brute_force_min(&f, &feasible, &lo, &hi, mesh, 0.0)
            .map_err(|_| Error::InfeasibleRelaxation { gamma })?;
        let mut best = (coarse.value, coarse.argmins[0].clone());
        for start in coarse.argmins.iter().take(4) {
            let cand = grid::refine_min(&f, &feasible, start, mesh);
            if cand.0 < best.0 {
                best = cand;
            }
        }
        Ok(best)
    }

    /// gap(γ) = min over X_{−γ} of f minus f*.
    pub fn gap(&self, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gap needs gamma > 0, got {gamma}")));
        }
        let (v, _) = self.relaxed_min(-gamma).map_err(|_| Error::InteriorRelaxationInfeasible { gamma })?;
        Ok((v - self.fstar).max(0.0))
    }

    /// min_i [−fᵢ(x̄)].
    pub fn slater_slack(&self, xbar: &[f64]) -> Result<f64> {
        self.check(xbar)?;
        if self.constraints.is_empty() {
            return Err(Error::NoConstraints);
        }
        Ok(-self.max_constraint(xbar))
    }

    /// The feasible set X as simple pieces, when available.
    pub fn feasible_set(&self) -> Option<&SimpleSet> {
        self.feasible_set.as_ref()
    }

    /// Euclidean projection onto X.
    pub fn project(&self, x: &[f64]) -> Option<Vec<f64>> {
        let set = self.feasible_set.as_ref()?;
        project_onto(&self.hard_set, set, x)
    }

    pub fn dist_to_feasible(&self, x: &[f64]) -> Option<f64> {
        if self.in_relaxed(x, 0.0) && self.hard_set.contains(x) {
            return Some(0.0);
        }
        self.project(x).map(|p| dist(x, &p))
    }

    /// max over infeasible probes of dist(x, X) / max_i [fᵢ(x)]₊.
    pub fn metric_regularity_estimate(&self, probes: &[Vec<f64>]) -> Result<f64> {
        if self.feasible_set.is_none() {
            return Err(Error::Missing("projection onto X"));
        }
        let mut best: Option<f64> = None;
        for p in probes {
            let r = self.max_constraint(p);
            if r <= 0.0 {
                continue;
            }
            let d = self.dist_to_feasible(p).ok_or(Error::EmptySet)?;
            best = Some(best.map_or(d / r, |b: f64| b.max(d / r)));
        }
        best.ok_or(Error::NoInformation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::loss::FnFunction;

    fn affine(a: Vec<f64>, b: f64) -> Arc<dyn PopulationFn> {
        Arc::new(FnFunction::affine(a, b))
    }

    fn unit_interval() -> HardSet {
        HardSet::new(super::super::HardSetKind::Box, vec![0.5], 0.5).unwrap()
    }

    #[test]
    fn residual_examples() {
        let y = HardSet::new(super::super::HardSetKind::Box, vec![0.0], 3.0).unwrap();
        let o = PopulationOracle::new(y, affine(vec![1.0], 0.0), vec![affine(vec![1.0], -1.0)]).unwrap();
        assert_eq!(o.feasibility_residual(&[0.5], 0.0).unwrap(), 0.0);
        assert_eq!(o.feasibility_residual(&[2.0], 0.0).unwrap(), 1.0);
        assert_eq!(o.feasibility_residual(&[0.75], -0.5).unwrap(), 0.25);
    }

    #[test]
    fn membership_examples() {
        let o = PopulationOracle::new(unit_interval(), affine(vec![1.0], 0.0), vec![]).unwrap();
        assert!(o.fstar.abs() < 1e-12);
        assert!(o.near_optimal_membership(&o.xstar.clone(), 0.0, 0.0).unwrap());
        assert!(!o.near_optimal_membership(&[0.3], 0.2, 0.0).unwrap());
        assert!(o.near_optimal_membership(&[0.3], 0.5, 0.0).unwrap());
    }

    #[test]
    fn metric_regularity_of_square_and_disc() {
        let y = HardSet::new(super::super::HardSetKind::Box, vec![0.0, 0.0], 4.0).unwrap();
        let square = vec![
            affine(vec![1.0, 0.0], -1.0),
            affine(vec![-1.0, 0.0], 0.0),
            affine(vec![0.0, 1.0], -1.0),
            affine(vec![0.0, -1.0], 0.0),
        ];
        let o = PopulationOracle::new(y.clone(), affine(vec![0.0, 0.0], 0.0), square).unwrap();
        assert!((o.metric_regularity_estimate(&[vec![2.0, 0.5]]).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(o.metric_regularity_estimate(&[vec![0.5, 0.5]]), Err(Error::NoInformation)));
        let disc: Arc<dyn PopulationFn> = Arc::new(FnFunction::distance_minus(vec![0.0, 0.0], 1.0));
        let o = PopulationOracle::new(y, affine(vec![0.0, 0.0], 0.0), vec![disc]).unwrap();
        assert!((o.metric_regularity_estimate(&[vec![2.0, 0.0]]).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn slater_examples() {
        let y = HardSet::new(super::super::HardSetKind::Box, vec![0.0, 0.0], 2.0).unwrap();
        let disc: Arc<dyn PopulationFn> = Arc::new(FnFunction::distance_minus(vec![0.0, 0.0], 1.0));
        let o = PopulationOracle::new(y, affine(vec![0.0, 0.0], 0.0), vec![disc]).unwrap();
        assert_eq!(o.slater_slack(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(o.slater_slack(&[1.0, 0.0]).unwrap(), 0.0);
        let y1 = HardSet::new(super::super::HardSetKind::Box, vec![0.0], 2.0).unwrap();
        let o = PopulationOracle::new(y1.clone(), affine(vec![0.0], 0.0), vec![affine(vec![1.0], -1.0), affine(vec![-1.0], 0.0)])
            .unwrap();
        assert_eq!(o.slater_slack(&[0.25]).unwrap(), 0.25);
        let free = PopulationOracle::new(y1, affine(vec![1.0], 0.0), vec![]).unwrap();
        assert!(matches!(free.slater_slack(&[0.0]), Err(Error::NoConstraints)));
    }

    #[test]
    fn gap_examples() {
        let y = HardSet::new(super::super::HardSetKind::Box, vec![0.0], 2.0).unwrap();
        let o = PopulationOracle::new(y.clone(), affine(vec![1.0], 0.0), vec![affine(vec![-1.0], 0.0)]).unwrap();
        assert!((o.gap(0.3).unwrap() - 0.3).abs() < 1e-9);
        // Interior minimizer of (x − 0.5)² with constraint x ≤ 1.5.
        let q: Arc<dyn PopulationFn> = Arc::new(FnFunction::new(|x| (x[0] - 0.5).powi(2), |x| vec![2.0 * (x[0] - 0.5)], 5.0));
        let o = PopulationOracle::new(y.clone(), q, vec![affine(vec![1.0], -1.5)]).unwrap();
        assert!(o.gap(0.5).unwrap() < 1e-12);
        let o = PopulationOracle::new(y, affine(vec![1.0], 0.0), vec![affine(vec![-1.0], 1.9)]).unwrap();
        assert!(matches!(o.gap(0.5), Err(Error::InteriorRelaxationInfeasible { .. })));
    }
}
