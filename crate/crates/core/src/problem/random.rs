//! Random small convex instances with grid-verifiable ground truth.

use std::sync::Arc;

use rand::Rng;

use super::descriptor::{best_slater_point, estimate_mr};
use super::hardset::{norm, HardSet};
use super::loss::{Atom, PopulationFn, ScenarioLoss, Term, TermLoss};
use super::noise::{NoiseLaw, ScenarioLaw};
use super::oracle::PopulationOracle;
use super::{Instance, StochasticProgram};
use crate::error::Result;
use crate::rng::SeedLineage;

/// Shape of a generated instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub max_dim: usize,
    pub max_constraints: usize,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self { max_dim: 2, max_constraints: 2 }
    }
}

fn positive_law<R: Rng>(rng: &mut R) -> NoiseLaw {
    if rng.random_bool(0.5) {
        let alpha = rng.random_range(3.0..6.0);
        NoiseLaw::Pareto { tail_index: alpha, scale: (alpha - 1.0) / alpha }
    } else {
        let h = 10f64.powf(rng.random_range(-3.0..-0.3));
        NoiseLaw::TwoPoint { low: 1.0 - h, high: 1.0 + h }
    }
}

fn signed_law<R: Rng>(rng: &mut R) -> NoiseLaw {
    let scale = 10f64.powf(rng.random_range(-3.0..-0.5));
    if rng.random_bool(0.5) {
        NoiseLaw::StudentT { dof: rng.random_range(5.0..12.0), scale }
    } else {
        NoiseLaw::Normal { scale }
    }
}

fn point_in<R: Rng>(rng: &mut R, y: &HardSet, shrink: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..y.dim()).map(|_| rng.random_range(-1.0..1.0) * y.radius * shrink).collect();
    y.project(&raw)
}

fn unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 0.2 && n <= 1.0 {
            return v.iter().map(|a| a / n).collect();
        }
    }
}

/// Draws a random instance: d ∈ {1,..,max_dim}, m ∈ {0,..,max_constraints},
/// Y the unit box or ball, an objective mixing squared distances, distances,
/// max-affine pieces and noisy linear tilts, and halfspace or ball
/// constraints that keep the origin strictly feasible.
pub fn random_instance(lineage: SeedLineage, spec: RandomSpec) -> Result<Instance> {
    let mut rng = lineage.rng();
    let d = rng.random_range(1..=spec.max_dim);
    let m = rng.random_range(0..=spec.max_constraints);
    let y = if rng.random_bool(0.5) { HardSet::unit_box(d) } else { HardSet::unit_ball(d) };

    let mut laws = Vec::new();
    let mut objective_terms = Vec::new();
    let pieces = rng.random_range(1..=3);
    for _ in 0..pieces {
        match rng.random_range(0..4) {
            0 => {
                laws.push(positive_law(&mut rng));
                let w = rng.random_range(0.5..2.0);
                objective_terms.push(Term::noisy(Atom::SquaredDistance { center: point_in(&mut rng, &y, 1.2) }, w, laws.len() - 1));
            }
            1 => {
                laws.push(positive_law(&mut rng));
                let w = rng.random_range(0.5..2.0);
                objective_terms.push(Term::noisy(Atom::Distance { center: point_in(&mut rng, &y, 1.2) }, w, laws.len() - 1));
            }
            2 => {
                let k = rng.random_range(2..=3);
                let slopes = (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
                let offsets = (0..k).map(|_| rng.random_range(-0.3..0.3)).collect();
                objective_terms.push(Term::fixed(Atom::MaxAffine { slopes, offsets }, 1.0));
            }
            _ => {
                laws.push(signed_law(&mut rng));
                let a = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                objective_terms.push(Term::noisy(Atom::Linear { a }, 1.0, laws.len() - 1));
                let a = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
                objective_terms.push(Term::fixed(Atom::Linear { a }, 1.0));
            }
        }
    }

    let mut constraint_terms = Vec::new();
    for _ in 0..m {
        if rng.random_bool(0.5) {
            let a = unit(&mut rng, d);
            let b = rng.random_range(0.1..0.8);
            if rng.random_bool(0.5) {
                laws.push(positive_law(&mut rng));
                let k = laws.len() - 1;
                let mu = laws[k].mean();
                constraint_terms.push(vec![Term::noisy(Atom::Linear { a }, 1.0, k), Term::fixed(Atom::Constant, -mu * b)]);
            } else {
                laws.push(signed_law(&mut rng));
                let k = laws.len() - 1;
                constraint_terms.push(vec![
                    Term::fixed(Atom::Linear { a }, 1.0),
                    Term::fixed(Atom::Constant, -b),
                    Term::noisy(Atom::Constant, 1.0, k),
                ]);
            }
        } else {
            let r = rng.random_range(0.4..1.0);
            let c: Vec<f64> = unit(&mut rng, d).iter().map(|v| v * rng.random_range(0.0..0.6) * r).collect();
            laws.push(positive_law(&mut rng));
            let k = laws.len() - 1;
            let mu = laws[k].mean();
            constraint_terms.push(vec![Term::noisy(Atom::Distance { center: c }, 1.0, k), Term::fixed(Atom::Constant, -mu * r)]);
        }
    }
    if laws.is_empty() {
        laws.push(NoiseLaw::Constant { value: 1.0 });
    }
    let law = ScenarioLaw::new(laws)?;
    let objective = TermLoss::new(objective_terms, &law, &y)?;
    let constraints = constraint_terms
        .into_iter()
        .map(|t| TermLoss::new(t, &law, &y))
        .collect::<Result<Vec<_>>>()?;
    let pops: Vec<Arc<dyn PopulationFn>> = constraints.iter().map(|l| Arc::new(l.population()) as _).collect();
    let mut oracle = PopulationOracle::new(y.clone(), Arc::new(objective.population()), pops)?;
    if m > 0 {
        if let Some(c) = estimate_mr(&oracle) {
            oracle = oracle.with_mr_constant(c);
        }
        if let Some(p) = best_slater_point(&oracle) {
            oracle = oracle.with_slater_point(p)?;
        }
    }
    let losses: Vec<Arc<dyn ScenarioLoss>> = constraints.into_iter().map(|l| Arc::new(l) as _).collect();
    let program = StochasticProgram::new(y, law, Arc::new(objective), losses, 0.0);
    Ok(Instance {
        id: format!("random-{}-{}", lineage.seed, lineage.stream),
        program,
        oracle: Arc::new(oracle),
    })
}
