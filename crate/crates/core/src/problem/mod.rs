//! Exact and empirical stochastic programs, scenario samples, and ground-truth
//! oracles for synthetic instances.

pub mod descriptor;
pub mod hardset;
pub mod loss;
pub mod noise;
pub mod oracle;
pub mod random;
pub mod sample;
pub mod simple;

use std::sync::Arc;

pub use hardset::{dist, dot, norm, HardSet, HardSetKind};
pub use loss::{
    Atom, AveragedLoss, ConvexFn, EmpiricalLoss, FnFunction, FnLoss, PopulationFn, ScenarioLoss, Term, TermLoss,
    TermPopulation,
};
pub use noise::{NoiseLaw, ScenarioLaw};
pub use oracle::{Growth, PopulationOracle, SlaterPoint};
pub use sample::{SampleMoments, ScenarioSet};
pub use simple::SimpleSet;

use crate::error::{Error, Result};

/// min F̂₀ over {x ∈ Y : F̂ᵢ(x) ≤ ε̂} with scenario-wise oracles.
#[derive(Clone)]
pub struct StochasticProgram {
    pub hard_set: HardSet,
    pub law: ScenarioLaw,
    /// Index 0 is the objective, 1..=m the constraints.
    pub losses: Vec<Arc<dyn ScenarioLoss>>,
    pub relaxation: f64,
}

impl StochasticProgram {
    pub fn new(
        hard_set: HardSet,
        law: ScenarioLaw,
        objective: Arc<dyn ScenarioLoss>,
        constraints: Vec<Arc<dyn ScenarioLoss>>,
        relaxation: f64,
    ) -> Self {
        let mut losses = vec![objective];
        losses.extend(constraints);
        Self { hard_set, law, losses, relaxation }
    }

    pub fn dim(&self) -> usize {
        self.hard_set.dim()
    }

    pub fn m(&self) -> usize {
        self.losses.len() - 1
    }

    pub fn with_relaxation(&self, relaxation: f64) -> Self {
        Self { relaxation, ..self.clone() }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got: x.len() });
        }
        if !self.hard_set.contains(x) {
            return Err(Error::OutsideHardSet);
        }
        Ok(())
    }

    /// The empirical program P̂ induced by a sample.
    pub fn empirical(&self, sample: &Arc<ScenarioSet>) -> EmpiricalProblem {
        let moments = (sample.width() == self.law.width()).then(|| SampleMoments::compute(sample, &self.law));
        let fns = self
            .losses
            .iter()
            .map(|l| {
                moments
                    .as_ref()
                    .and_then(|m| l.summarize(m))
                    .unwrap_or_else(|| Arc::new(AveragedLoss::new(l.clone(), sample.clone())))
            })
            .collect();
        EmpiricalProblem { hard_set: self.hard_set.clone(), fns, relaxation: self.relaxation }
    }

    /// Spot-checks convexity and the Lipschitz envelope on random triples.
    pub fn spot_check<R: rand::Rng>(&self, rng: &mut R, trials: usize) -> Result<()> {
        let d = self.dim();
        let (lo, hi) = self.hard_set.bounding_box();
        let mut xi = Vec::new();
        for _ in 0..trials {
            let mut draw = || -> Vec<f64> {
                let p: Vec<f64> = (0..d).map(|k| rng.random_range(lo[k]..=hi[k])).collect();
                self.hard_set.project(&p)
            };
            let x = draw();
            let y = draw();
            self.law.draw_into(rng, &mut xi);
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            for (i, l) in self.losses.iter().enumerate() {
                let (fx, fy, fm) = (l.value(&x, &xi), l.value(&y, &xi), l.value(&mid, &xi));
                let scale = 1.0 + fx.abs().max(fy.abs());
                if fm > 0.5 * (fx + fy) + 1e-9 * scale {
                    return Err(Error::PremiseInvalid(format!("loss {i} fails midpoint convexity")));
                }
                if (fx - fy).abs() > l.envelope(&xi) * dist(&x, &y) + 1e-9 * scale {
                    return Err(Error::PremiseInvalid(format!("loss {i} exceeds its Lipschitz envelope")));
                }
            }
        }
        Ok(())
    }
}

/// (1/N)·Σⱼ Fᵢ(x, ξⱼ) by direct summation.
pub fn empirical_value(program: &StochasticProgram, sample: &ScenarioSet, i: usize, x: &[f64]) -> Result<f64> {
    if i > program.m() {
        return Err(Error::IndexOutOfRange { index: i, m: program.m() });
    }
    program.check_point(x)?;
    let loss = &program.losses[i];
    Ok(sample.iter().map(|xi| loss.value(x, xi)).sum::<f64>() / sample.n() as f64)
}

/// The empirical program: F̂ᵢ oracles plus the relaxation ε̂.
#[derive(Clone)]
pub struct EmpiricalProblem {
    pub hard_set: HardSet,
    /// Index 0 is the objective.
    pub fns: Vec<Arc<dyn EmpiricalLoss>>,
    pub relaxation: f64,
}

impl EmpiricalProblem {
    pub fn from_functions(hard_set: HardSet, fns: Vec<Arc<dyn EmpiricalLoss>>, relaxation: f64) -> Self {
        Self { hard_set, fns, relaxation }
    }

    pub fn m(&self) -> usize {
        self.fns.len() - 1
    }

    pub fn with_relaxation(&self, relaxation: f64) -> Self {
        Self { relaxation, ..self.clone() }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.fns[0].value(x)
    }

    /// max_i [F̂ᵢ(x) − ε̂]₊.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.fns[1..].iter().map(|f| f.value(x) - self.relaxation).fold(0.0, f64::max)
    }

    pub fn feasible(&self, x: &[f64]) -> bool {
        self.hard_set.contains(x) && self.fns[1..].iter().all(|f| f.value(x) <= self.relaxation)
    }

    /// Lipschitz constant P̂𝖫ᵢ of F̂ᵢ.
    pub fn lipschitz(&self, i: usize) -> f64 {
        self.fns[i].envelope_mean()
    }
}

/// A program together with its ground truth.
#[derive(Clone)]
pub struct Instance {
    pub id: String,
    pub program: StochasticProgram,
    pub oracle: Arc<PopulationOracle>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedLineage;

    fn scalar_program(loss: FnLoss, d: usize) -> StochasticProgram {
        let law = ScenarioLaw::new(vec![NoiseLaw::Constant { value: 0.0 }]).unwrap();
        StochasticProgram::new(HardSet::new(HardSetKind::Box, vec![0.0; d], 3.0).unwrap(), law, Arc::new(loss), vec![], 0.0)
    }

    #[test]
    fn constant_loss_averages_to_constant() {
        let p = scalar_program(FnLoss::new(|_, _| 2.5, |x, _| vec![0.0; x.len()], |_| 0.0), 1);
        let s = ScenarioSet::from_scalars(&[1.0, -4.0, 9.0]).unwrap();
        assert_eq!(empirical_value(&p, &s, 0, &[0.3]).unwrap(), 2.5);
    }

    #[test]
    fn envelope_times_norm() {
        let p = scalar_program(FnLoss::new(|x, xi| xi[0] * norm(x), |x, xi| x.iter().map(|v| xi[0] * v / norm(x)).collect(), |xi| xi[0].abs()), 2);
        let s = ScenarioSet::from_scalars(&[1.0, 3.0]).unwrap();
        assert_eq!(empirical_value(&p, &s, 0, &[1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn squared_deviation_hand_value() {
        let p = scalar_program(FnLoss::new(|x, xi| (xi[0] - x[0]).powi(2), |x, xi| vec![2.0 * (x[0] - xi[0])], |xi| 2.0 * (xi[0].abs() + 3.0)), 1);
        let s = ScenarioSet::from_scalars(&[0.0, 2.0]).unwrap();
        assert_eq!(empirical_value(&p, &s, 0, &[1.0]).unwrap(), 1.0);
    }

    #[test]
    fn index_and_domain_errors() {
        let p = scalar_program(FnLoss::new(|_, _| 0.0, |x, _| vec![0.0; x.len()], |_| 0.0), 1);
        let s = ScenarioSet::from_scalars(&[0.0]).unwrap();
        assert!(matches!(empirical_value(&p, &s, 1, &[0.0]), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(empirical_value(&p, &s, 0, &[5.0]), Err(Error::OutsideHardSet)));
    }

    #[test]
    fn regenerated_samples_give_identical_values() {
        let law = ScenarioLaw::new(vec![NoiseLaw::Pareto { tail_index: 3.5, scale: 1.0 }]).unwrap();
        let y = HardSet::unit_box(2);
        let loss = TermLoss::new(vec![Term::noisy(Atom::Distance { center: vec![0.1, 0.2] }, 1.0, 0)], &law, &y).unwrap();
        let p = StochasticProgram::new(y, law.clone(), Arc::new(loss), vec![], 0.0);
        let a = ScenarioSet::generate(&law, 300, SeedLineage::new(11, 4)).unwrap();
        let b = ScenarioSet::generate(&law, 300, SeedLineage::new(11, 4)).unwrap();
        let x = [0.4, -0.7];
        assert_eq!(
            empirical_value(&p, &a, 0, &x).unwrap().to_bits(),
            empirical_value(&p, &b, 0, &x).unwrap().to_bits()
        );
    }

    #[test]
    fn spread_shrinks_like_root_n() {
        let law = ScenarioLaw::new(vec![NoiseLaw::StudentT { dof: 8.0, scale: 1.0 }]).unwrap();
        let y = HardSet::unit_box(1);
        let loss = TermLoss::new(vec![Term::noisy(Atom::Linear { a: vec![1.0] }, 1.0, 0)], &law, &y).unwrap();
        let p = StochasticProgram::new(y, law.clone(), Arc::new(loss), vec![], 0.0);
        let spread = |n: usize| {
            let vals: Vec<f64> = (0..50)
                .map(|k| {
                    let s = ScenarioSet::generate(&law, n, SeedLineage::new(77, k as u64 + n as u64 * 1000)).unwrap();
                    empirical_value(&p, &s, 0, &[0.8]).unwrap()
                })
                .collect();
            let m = vals.iter().sum::<f64>() / 50.0;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 49.0).sqrt()
        };
        let ratio = spread(200) / spread(2000);
        assert!((2.0..=5.0).contains(&ratio), "ratio {ratio}");
    }
}
