//! Scenario laws: independent scalar components with closed-form moments.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NoiseLaw {
    /// Pareto type I with minimum `scale` and tail index `tail_index`.
    Pareto { tail_index: f64, scale: f64 },
    /// `scale` times a Student-t variate with `dof` degrees of freedom.
    StudentT { dof: f64, scale: f64 },
    Normal { scale: f64 },
    /// `low` or `high` with probability one half each.
    TwoPoint { low: f64, high: f64 },
    Constant { value: f64 },
}

impl NoiseLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseLaw::Pareto { tail_index, scale } => {
                if !(tail_index > 1.0 && scale > 0.0) {
                    return Err(invalid(format!(
                        "pareto needs tail_index > 1 and scale > 0, got {tail_index}, {scale}"
                    )));
                }
            }
            NoiseLaw::StudentT { dof, scale } => {
                if !(dof > 1.0 && scale > 0.0) {
                    return Err(invalid(format!("student-t needs dof > 1 and scale > 0, got {dof}, {scale}")));
                }
            }
            NoiseLaw::Normal { scale } => {
                if !(scale >= 0.0) {
                    return Err(invalid("normal scale must be nonnegative"));
                }
            }
            NoiseLaw::TwoPoint { low, high } => {
                if !(low.is_finite() && high.is_finite()) {
                    return Err(invalid("two-point values must be finite"));
                }
            }
            NoiseLaw::Constant { value } => {
                if !value.is_finite() {
                    return Err(invalid("constant must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseLaw::Pareto { tail_index, scale } => {
                let u: f64 = rng.random();
                scale * (1.0 - u).powf(-1.0 / tail_index)
            }
            NoiseLaw::StudentT { dof, scale } => {
                let t = StudentT::new(dof).expect("validated dof");
                scale * t.sample(rng)
            }
            NoiseLaw::Normal { scale } => {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            }
            NoiseLaw::TwoPoint { low, high } => {
                if rng.random::<bool>() {
                    high
                } else {
                    low
                }
            }
            NoiseLaw::Constant { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NoiseLaw::Pareto { tail_index, scale } => tail_index * scale / (tail_index - 1.0),
            NoiseLaw::StudentT { .. } | NoiseLaw::Normal { .. } => 0.0,
            NoiseLaw::TwoPoint { low, high } => 0.5 * (low + high),
            NoiseLaw::Constant { value } => value,
        }
    }

    /// E|X|^p, or `None` when the moment is infinite.
    pub fn abs_moment(&self, p: u32) -> Option<f64> {
        self.abs_moment_real(p as f64)
    }

    /// E|X|^p for real p ≥ 0.
    pub fn abs_moment_real(&self, pf: f64) -> Option<f64> {
        if pf == 0.0 {
            return Some(1.0);
        }
        match *self {
            NoiseLaw::Pareto { tail_index, scale } => {
                (pf < tail_index).then(|| tail_index * scale.powf(pf) / (tail_index - pf))
            }
            NoiseLaw::StudentT { dof, scale } => (pf < dof).then(|| {
                let log = 0.5 * pf * dof.ln() + ln_gamma(0.5 * (pf + 1.0)) + ln_gamma(0.5 * (dof - pf))
                    - 0.5 * PI.ln()
                    - ln_gamma(0.5 * dof);
                scale.powf(pf) * log.exp()
            }),
            NoiseLaw::Normal { scale } => {
                let log = 0.5 * pf * 2f64.ln() + ln_gamma(0.5 * (pf + 1.0)) - 0.5 * PI.ln();
                Some(scale.powf(pf) * log.exp())
            }
            NoiseLaw::TwoPoint { low, high } => Some(0.5 * (low.abs().powf(pf) + high.abs().powf(pf))),
            NoiseLaw::Constant { value } => Some(value.abs().powf(pf)),
        }
    }

    pub fn variance(&self) -> Option<f64> {
        let m = self.mean();
        self.abs_moment(2).map(|s| (s - m * m).max(0.0))
    }

    pub fn is_nonnegative(&self) -> bool {
        match *self {
            NoiseLaw::Pareto { .. } => true,
            NoiseLaw::StudentT { .. } | NoiseLaw::Normal { .. } => false,
            NoiseLaw::TwoPoint { low, high } => low >= 0.0 && high >= 0.0,
            NoiseLaw::Constant { value } => value >= 0.0,
        }
    }
}

/// A scenario is a vector of independent draws, one per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLaw {
    pub components: Vec<NoiseLaw>,
}

impl ScenarioLaw {
    pub fn new(components: Vec<NoiseLaw>) -> Result<Self> {
        for c in &components {
            c.validate()?;
        }
        Ok(Self { components })
    }

    pub fn width(&self) -> usize {
        self.components.len()
    }

    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        for c in &self.components {
            out.push(c.sample(rng));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedLineage;

    #[test]
    fn pareto_moments_closed_form() {
        let law = NoiseLaw::Pareto { tail_index: 4.5, scale: 1.0 };
        assert!((law.mean() - 4.5 / 3.5).abs() < 1e-15);
        assert!((law.abs_moment(2).unwrap() - 1.8).abs() < 1e-15);
        assert!((law.abs_moment(4).unwrap() - 9.0).abs() < 1e-12);
        assert!(law.abs_moment(5).is_none());
    }

    #[test]
    fn student_t_second_moment() {
        let law = NoiseLaw::StudentT { dof: 12.0, scale: 2.0 };
        assert!((law.abs_moment(2).unwrap() - 4.0 * 12.0 / 10.0).abs() < 1e-10);
        let cauchy_like = NoiseLaw::StudentT { dof: 3.0, scale: 1.0 };
        assert!(cauchy_like.abs_moment(3).is_none());
    }

    #[test]
    fn normal_abs_moments() {
        let law = NoiseLaw::Normal { scale: 1.0 };
        assert!((law.abs_moment(1).unwrap() - (2.0 / PI).sqrt()).abs() < 1e-12);
        assert!((law.abs_moment(4).unwrap() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn monte_carlo_mean_matches() {
        let law = NoiseLaw::Pareto { tail_index: 4.5, scale: 2.0 };
        let mut rng = SeedLineage::new(1, 0).rng();
        let n = 200_000;
        let m: f64 = (0..n).map(|_| law.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - law.mean()).abs() < 0.01, "{m}");
    }
}
