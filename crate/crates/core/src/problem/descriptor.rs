//! JSON instance descriptors with closed-form population oracles.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::hardset::{norm, HardSet};
use super::loss::{Atom, PopulationFn, ScenarioLoss, Term, TermLoss};
use super::noise::{NoiseLaw, ScenarioLaw};
use super::oracle::{Growth, PopulationOracle};
use super::{Instance, StochasticProgram};
use crate::error::{Error, Result};
use crate::solver::grid::Grid;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossFamily {
    /// F₀ = ξ₀‖x − c‖.
    Norm,
    /// F₀ = ξ₀‖x − c‖ + (ξ₁ − Eξ₁)·x[0].
    NormTilted,
    /// F₀ = ξ₀‖x − c‖².
    Quadratic,
}

/// Constraint ξₖ⟨a, x⟩ − Eξₖ·b, so fᵢ(x) = Eξₖ(⟨a, x⟩ − b).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceSpec {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDescriptor {
    pub schema_version: u32,
    pub id: String,
    pub dimension: usize,
    pub m: usize,
    pub hard_set: HardSet,
    pub loss_family: LossFamily,
    pub noise: NoiseLaw,
    #[serde(default)]
    pub relaxation: f64,
    pub objective_center: Vec<f64>,
    #[serde(default)]
    pub halfspaces: Vec<HalfspaceSpec>,
    #[serde(default)]
    pub growth: Option<Growth>,
    #[serde(default)]
    pub mr_constant: Option<f64>,
    #[serde(default)]
    pub slater: Option<Vec<f64>>,
}

impl InstanceDescriptor {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(text)?;
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(format!("instance {}: {msg}", self.id)));
        if self.schema_version != SCHEMA_VERSION {
            return cfg(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.dimension == 0 || self.hard_set.dim() != self.dimension || self.objective_center.len() != self.dimension {
            return cfg("dimension does not match hard_set or objective_center".into());
        }
        if self.halfspaces.len() != self.m {
            return cfg(format!("m = {} but {} halfspaces given", self.m, self.halfspaces.len()));
        }
        if self.halfspaces.iter().any(|h| h.normal.len() != self.dimension) {
            return cfg("halfspace normal has the wrong dimension".into());
        }
        self.noise.validate()?;
        if !self.noise.is_nonnegative() {
            return cfg("objective multiplier must be nonnegative for convexity".into());
        }
        Ok(())
    }

    fn law(&self) -> Result<ScenarioLaw> {
        let tilt = usize::from(self.loss_family == LossFamily::NormTilted);
        ScenarioLaw::new(vec![self.noise.clone(); 1 + tilt + self.m])
    }

    pub fn build(&self) -> Result<Instance> {
        self.validate()?;
        let y = self.hard_set.clone();
        let law = self.law()?;
        let c = self.objective_center.clone();
        let mut terms = vec![match self.loss_family {
            LossFamily::Quadratic => Term::noisy(Atom::SquaredDistance { center: c.clone() }, 1.0, 0),
            _ => Term::noisy(Atom::Distance { center: c.clone() }, 1.0, 0),
        }];
        let mut first = 1;
        if self.loss_family == LossFamily::NormTilted {
            let mut e = vec![0.0; self.dimension];
            e[0] = 1.0;
            terms.push(Term::noisy(Atom::Linear { a: e.clone() }, 1.0, 1));
            terms.push(Term::fixed(Atom::Linear { a: e }, -self.noise.mean()));
            first = 2;
        }
        let objective = TermLoss::new(terms, &law, &y)?;
        let mean = self.noise.mean();
        let constraints = self
            .halfspaces
            .iter()
            .enumerate()
            .map(|(i, h)| {
                TermLoss::new(
                    vec![
                        Term::noisy(Atom::Linear { a: h.normal.clone() }, 1.0, first + i),
                        Term::fixed(Atom::Constant, -mean * h.offset),
                    ],
                    &law,
                    &y,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let pops: Vec<Arc<dyn PopulationFn>> = constraints.iter().map(|l| Arc::new(l.population()) as _).collect();
        let mut oracle = PopulationOracle::new(y.clone(), Arc::new(objective.population()), pops)?;

        let growth = self.growth.or_else(|| match self.loss_family {
            LossFamily::Quadratic => Some(Growth::Quadratic { modulus: 2.0 * mean }),
            _ if self.dimension == 1 || super::hardset::dist(&oracle.xstar, &c) < 1e-9 => Some(Growth::Sharp { kappa: mean }),
            _ => None,
        });
        if let Some(g) = growth {
            oracle = oracle.with_growth(g);
        }
        let mr = self.mr_constant.or_else(|| match self.halfspaces.as_slice() {
            [h] => Some(1.0 / (mean * norm(&h.normal))),
            [] => None,
            _ => estimate_mr(&oracle),
        });
        if let Some(c) = mr {
            oracle = oracle.with_mr_constant(c);
        }
        if self.m > 0 {
            let xbar = match &self.slater {
                Some(p) => Some(p.clone()),
                None => best_slater_point(&oracle),
            };
            if let Some(p) = xbar {
                if oracle.slater_slack(&p)? > 0.0 {
                    oracle = oracle.with_slater_point(p)?;
                }
            }
        }
        let losses: Vec<Arc<dyn ScenarioLoss>> = constraints.into_iter().map(|l| Arc::new(l) as _).collect();
        let program = StochasticProgram::new(y, law, Arc::new(objective), losses, self.relaxation);
        Ok(Instance { id: self.id.clone(), program, oracle: Arc::new(oracle) })
    }
}

/// Grid probes over Y, inflated by a 1.25 safety factor.
pub fn estimate_mr(oracle: &PopulationOracle) -> Option<f64> {
    let probes = probe_grid(&oracle.hard_set, if oracle.dim() == 1 { 401 } else { 61 });
    oracle.metric_regularity_estimate(&probes).ok().map(|c| 1.25 * c)
}

/// Grid point of Y with the largest Slater slack.
pub fn best_slater_point(oracle: &PopulationOracle) -> Option<Vec<f64>> {
    probe_grid(&oracle.hard_set, if oracle.dim() == 1 { 401 } else { 61 })
        .into_iter()
        .map(|p| (oracle.slater_slack(&p).unwrap_or(f64::NEG_INFINITY), p))
        .filter(|(s, _)| *s > 0.0)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, p)| p)
}

pub(crate) fn probe_grid(y: &HardSet, per_side: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = y.bounding_box();
    let grid = Grid::new(&lo, &hi, (hi[0] - lo[0]) / (per_side - 1) as f64);
    grid.points().filter(|p| y.contains_strict(p)).collect()
}
