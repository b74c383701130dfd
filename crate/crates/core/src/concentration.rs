//! The appendix concentration inequalities as formulas, and Monte Carlo
//! estimates of the tail frequencies they bound.

use serde::{Deserialize, Serialize};

use crate::entropy::{a1_functional, EntropyMethod};
use crate::error::{invalid, Result};
use crate::parallel::map_indexed;
use crate::problem::NoiseLaw;
use crate::rng::SeedLineage;
use crate::sets::SetSpec;
use crate::stats::Wilson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundFamily {
    Panchenko,
    SelfNormalized,
    UniformDeviation,
    LowerTail,
}

impl BoundFamily {
    pub fn name(self) -> &'static str {
        match self {
            BoundFamily::Panchenko => "panchenko",
            BoundFamily::SelfNormalized => "self-normalized",
            BoundFamily::UniformDeviation => "uniform-deviation",
            BoundFamily::LowerTail => "lower-tail",
        }
    }
}

/// A deviation threshold with the tail mass claimed beyond it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub family: BoundFamily,
    pub threshold: f64,
    pub claimed: f64,
    pub n: usize,
    pub t: f64,
}

fn check_common(n: usize, t: f64) -> Result<()> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    if !(t > 0.0) {
        return Err(invalid(format!("t must be positive, got {t}")));
    }
    Ok(())
}

/// √(2(1+t)V̂/N) with tail 2e^{−t} on each side of S − E[S], for S the sup of
/// empirical means and V̂ = N⁻¹·E[sup Σ(g(ξⱼ) − g(ηⱼ))² | ξ].
pub fn panchenko_threshold(v_hat: f64, n: usize, t: f64) -> Result<TailBound> {
    check_common(n, t)?;
    if !(v_hat >= 0.0) {
        return Err(invalid(format!("V must be nonnegative, got {v_hat}")));
    }
    Ok(TailBound {
        family: BoundFamily::Panchenko,
        threshold: (2.0 * (1.0 + t) * v_hat / n as f64).sqrt(),
        claimed: 2.0 * (-t).exp(),
        n,
        t,
    })
}

/// √(2(1+t)/N · (P̂+P)[g − Pg]²) for (P̂ − P)g.
pub fn self_normalized_threshold(sample: &[f64], pop_mean: f64, pop_central_second: f64, t: f64) -> Result<TailBound> {
    check_common(sample.len(), t)?;
    if !(pop_central_second >= 0.0) {
        return Err(invalid("population second moment must be nonnegative"));
    }
    let n = sample.len();
    let emp = sample.iter().map(|g| (g - pop_mean).powi(2)).sum::<f64>() / n as f64;
    Ok(TailBound {
        family: BoundFamily::SelfNormalized,
        threshold: (2.0 * (1.0 + t) / n as f64 * (emp + pop_central_second)).sqrt(),
        claimed: 2.0 * (-t).exp(),
        n,
        t,
    })
}

/// 2A₁√((1+t)(𝖫̂² + L²)/N) for each one-sided sup of (P̂ − P)[G(x) − G(y)].
pub fn uniform_deviation_threshold(a1: f64, l_hat: f64, l: f64, n: usize, t: f64) -> Result<TailBound> {
    check_common(n, t)?;
    if !(a1 >= 0.0 && l_hat >= 0.0 && l >= 0.0) {
        return Err(invalid("A1 and Lipschitz moduli must be nonnegative"));
    }
    Ok(TailBound {
        family: BoundFamily::UniformDeviation,
        threshold: 2.0 * a1 * ((1.0 + t) * (l_hat * l_hat + l * l) / n as f64).sqrt(),
        claimed: 2.0 * (-t).exp(),
        n,
        t,
    })
}

fn check_lower(mean_z: f64, moment_za: f64, a: f64, eps: f64, n: usize) -> Result<()> {
    if !(a > 1.0 && a <= 2.0) {
        return Err(invalid(format!("a must lie in (1, 2], got {a}")));
    }
    if !(mean_z > 0.0 && moment_za >= mean_z.powf(a) * (1.0 - 1e-12)) {
        return Err(invalid("need E Z > 0 and E Z^a >= (E Z)^a"));
    }
    if !(eps > 0.0) || n == 0 {
        return Err(invalid("need eps > 0 and N >= 1"));
    }
    Ok(())
}

/// P{mean ≤ (1−ε)EZ} ≤ exp{−(1 − 1/a)(εEZ)^{a/(a−1)}/(EZ^a)^{1/(a−1)}·N},
/// the exponent obtained by optimizing the Chernoff parameter.
pub fn lower_tail_probability_bound(mean_z: f64, moment_za: f64, a: f64, eps: f64, n: usize) -> Result<f64> {
    check_lower(mean_z, moment_za, a, eps, n)?;
    let e = (1.0 - 1.0 / a) * (eps * mean_z).powf(a / (a - 1.0)) / moment_za.powf(1.0 / (a - 1.0));
    Ok((-e * n as f64).exp())
}

/// The same bound with the exponent ε^{(a−1)/a}((EZ)^a/EZ^a)^{1/(a−1)}, as
/// printed in the lemma's statement. Reported next to the proof's version.
pub fn lower_tail_statement_bound(mean_z: f64, moment_za: f64, a: f64, eps: f64, n: usize) -> Result<f64> {
    check_lower(mean_z, moment_za, a, eps, n)?;
    let e = (1.0 - 1.0 / a) * eps.powf((a - 1.0) / a) * (mean_z.powf(a) / moment_za).powf(1.0 / (a - 1.0));
    Ok((-e * n as f64).exp())
}

/// Fraction of replications whose deviation reaches its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFrequency {
    pub wilson: Wilson,
    pub mean_threshold: f64,
}

/// Runs `generator(rep)` → (deviation, threshold) for each replication and
/// counts deviation ≥ threshold.
pub fn empirical_tail_frequency<F>(replications: usize, generator: F) -> Result<TailFrequency>
where
    F: Fn(usize) -> Result<(f64, f64)> + Sync + Send,
{
    if replications < 100 {
        return Err(invalid(format!("need at least 100 replications, got {replications}")));
    }
    let pairs = map_indexed(replications, generator).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(frequency_of(&pairs))
}

fn frequency_of(pairs: &[(f64, f64)]) -> TailFrequency {
    let hits = pairs.iter().filter(|(d, t)| d >= t).count();
    TailFrequency {
        wilson: Wilson::new(hits, pairs.len()),
        mean_threshold: pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64,
    }
}

/// Heavy-tailed scalar laws used by the suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum Generator {
    Pareto { tail_index: f64 },
    StudentT { dof: f64 },
}

impl Generator {
    pub fn law(self) -> NoiseLaw {
        match self {
            Generator::Pareto { tail_index } => NoiseLaw::Pareto { tail_index, scale: 1.0 },
            Generator::StudentT { dof } => NoiseLaw::StudentT { dof, scale: 1.0 },
        }
    }

    pub fn label(self) -> String {
        match self {
            Generator::Pareto { tail_index } => format!("pareto-{tail_index}"),
            Generator::StudentT { dof } => format!("student-t-{dof}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub n: usize,
    pub replications: usize,
    pub ts: Vec<f64>,
    pub lower_tail_eps: Vec<f64>,
    pub lower_tail_a: Vec<f64>,
    pub generators: Vec<Generator>,
    pub ghost_resamples: usize,
    pub pilot_replications: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            n: 50,
            replications: 2000,
            ts: vec![1.0, 2.0, 3.0],
            lower_tail_eps: vec![0.1, 0.2, 0.3],
            lower_tail_a: vec![1.5, 2.0],
            generators: vec![
                Generator::Pareto { tail_index: 3.0 },
                Generator::Pareto { tail_index: 4.5 },
                Generator::Pareto { tail_index: 6.0 },
                Generator::StudentT { dof: 5.0 },
                Generator::StudentT { dof: 8.0 },
                Generator::StudentT { dof: 12.0 },
            ],
            ghost_resamples: 64,
            pilot_replications: 20_000,
            seed: 2024,
        }
    }
}

/// One row of the suite: a family, a generator, a side and a parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub family: BoundFamily,
    pub generator: String,
    pub n: usize,
    pub side: String,
    /// t for the first three families, ε for the lower tail.
    pub param: f64,
    /// The moment order a for the lower tail.
    pub a: Option<f64>,
    pub mean_threshold: f64,
    pub frequency: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
    pub claimed: f64,
    /// The lower-tail bound as printed in the statement, for comparison.
    pub statement_claimed: Option<f64>,
    pub passes: bool,
}

impl BoundCheck {
    fn new(family: BoundFamily, g: Generator, n: usize, side: &str, param: f64, freq: TailFrequency, claimed: f64) -> Self {
        Self {
            family,
            generator: g.label(),
            n,
            side: side.into(),
            param,
            a: None,
            mean_threshold: freq.mean_threshold,
            frequency: freq.wilson.frequency,
            wilson_lo: freq.wilson.lo,
            wilson_hi: freq.wilson.hi,
            claimed,
            statement_claimed: None,
            passes: freq.wilson.lo <= claimed,
        }
    }
}

/// Scalar functions whose sup of means is the Panchenko statistic.
const FAMILY: [(f64, f64); 3] = [(1.0, 0.0), (-0.5, 0.0), (0.0, 0.25)];

fn family_value(k: usize, xi: f64) -> f64 {
    FAMILY[k].0 * xi + FAMILY[k].1 * xi.abs()
}

fn draw(law: &NoiseLaw, rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| law.sample(rng)).collect()
}

fn sup_of_means(xs: &[f64]) -> f64 {
    (0..FAMILY.len())
        .map(|k| xs.iter().map(|&x| family_value(k, x)).sum::<f64>() / xs.len() as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// sup over x ∈ [0,1] of x·d₁ + x²·d₂.
fn sup_quadratic(d1: f64, d2: f64) -> f64 {
    let mut best = 0.0f64.max(d1 + d2);
    if d2 < 0.0 {
        let v = -d1 / (2.0 * d2);
        if (0.0..=1.0).contains(&v) {
            best = best.max(v * d1 + v * v * d2);
        }
    }
    best
}

/// Runs every family against every generator.
pub fn concentration_suite(cfg: &SuiteConfig) -> Result<Vec<BoundCheck>> {
    if cfg.replications < 100 {
        return Err(invalid("need at least 100 replications"));
    }
    let n = cfg.n;
    let nf = n as f64;
    let a1 = a1_functional(&SetSpec::boxed(vec![0.0], vec![1.0]), EntropyMethod::ExactGreedy, 1e-4)?.value;
    let mut rows = Vec::new();
    for (gi, &g) in cfg.generators.iter().enumerate() {
        let law = g.law();
        let base = SeedLineage::new(cfg.seed, gi as u64);
        let mean = law.mean();
        let var = law.variance().ok_or_else(|| invalid("generator needs a finite variance"))?;
        let abs1 = law.abs_moment(1).expect("finite mean");

        // Panchenko: S and V̂ from the same replication.
        let pilot = map_indexed(cfg.pilot_replications, |r| {
            let mut rng = base.child(1).child(r as u64).rng();
            sup_of_means(&draw(&law, &mut rng, n))
        });
        let es = pilot.iter().sum::<f64>() / pilot.len() as f64;
        let reps: Vec<(f64, f64)> = map_indexed(cfg.replications, |r| {
            let mut rng = base.child(2).child(r as u64).rng();
            let xs = draw(&law, &mut rng, n);
            let mut v = 0.0;
            for _ in 0..cfg.ghost_resamples {
                let ys = draw(&law, &mut rng, n);
                v += (0..FAMILY.len())
                    .map(|k| xs.iter().zip(&ys).map(|(&x, &y)| (family_value(k, x) - family_value(k, y)).powi(2)).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
            }
            (sup_of_means(&xs) - es, v / cfg.ghost_resamples as f64 / nf)
        });
        for &t in &cfg.ts {
            let scale = (2.0 * (1.0 + t) / nf).sqrt();
            let claimed = 2.0 * (-t).exp();
            let up: Vec<(f64, f64)> = reps.iter().map(|&(d, v)| (d, scale * v.sqrt())).collect();
            let down: Vec<(f64, f64)> = reps.iter().map(|&(d, v)| (-d, scale * v.sqrt())).collect();
            rows.push(BoundCheck::new(BoundFamily::Panchenko, g, n, "upper", t, frequency_of(&up), claimed));
            rows.push(BoundCheck::new(BoundFamily::Panchenko, g, n, "lower", t, frequency_of(&down), claimed));
        }

        // Self-normalized: g(ξ) = ξ.
        let reps: Vec<(f64, f64)> = map_indexed(cfg.replications, |r| {
            let mut rng = base.child(3).child(r as u64).rng();
            let xs = draw(&law, &mut rng, n);
            let dev = xs.iter().sum::<f64>() / nf - mean;
            let emp = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
            (dev, emp + var)
        });
        for &t in &cfg.ts {
            let scale = (2.0 * (1.0 + t) / nf).sqrt();
            let claimed = 2.0 * (-t).exp();
            let up: Vec<(f64, f64)> = reps.iter().map(|&(d, v)| (d, scale * v.sqrt())).collect();
            let down: Vec<(f64, f64)> = reps.iter().map(|&(d, v)| (-d, scale * v.sqrt())).collect();
            rows.push(BoundCheck::new(BoundFamily::SelfNormalized, g, n, "upper", t, frequency_of(&up), claimed));
            rows.push(BoundCheck::new(BoundFamily::SelfNormalized, g, n, "lower", t, frequency_of(&down), claimed));
        }

        // Uniform deviation: G(x, ξ) = ξ₁x + ξ₂x² on [0, 1], 𝖫 = |ξ₁| + 2|ξ₂|.
        let l_sq = 5.0 * (var + mean * mean) + 4.0 * abs1 * abs1;
        let reps: Vec<(f64, f64, f64)> = map_indexed(cfg.replications, |r| {
            let mut rng = base.child(4).child(r as u64).rng();
            let (mut s1, mut s2, mut lh) = (0.0, 0.0, 0.0);
            for _ in 0..n {
                let (x1, x2) = (law.sample(&mut rng), law.sample(&mut rng));
                s1 += x1;
                s2 += x2;
                lh += (x1.abs() + 2.0 * x2.abs()).powi(2);
            }
            let (d1, d2) = (s1 / nf - mean, s2 / nf - mean);
            (sup_quadratic(d1, d2), sup_quadratic(-d1, -d2), lh / nf)
        });
        for &t in &cfg.ts {
            let th = |lh: f64| 2.0 * a1 * ((1.0 + t) * (lh + l_sq) / nf).sqrt();
            let claimed = 2.0 * (-t).exp();
            let up: Vec<(f64, f64)> = reps.iter().map(|&(u, _, lh)| (u, th(lh))).collect();
            let down: Vec<(f64, f64)> = reps.iter().map(|&(_, d, lh)| (d, th(lh))).collect();
            rows.push(BoundCheck::new(BoundFamily::UniformDeviation, g, n, "upper", t, frequency_of(&up), claimed));
            rows.push(BoundCheck::new(BoundFamily::UniformDeviation, g, n, "lower", t, frequency_of(&down), claimed));
        }

        // Lower tail of Z = |ξ|.
        let means: Vec<f64> = map_indexed(cfg.replications, |r| {
            let mut rng = base.child(5).child(r as u64).rng();
            draw(&law, &mut rng, n).iter().map(|x| x.abs()).sum::<f64>() / nf
        });
        for &a in &cfg.lower_tail_a {
            let za = law.abs_moment_real(a).ok_or_else(|| invalid("generator needs E|Z|^a"))?;
            for &eps in &cfg.lower_tail_eps {
                let pairs: Vec<(f64, f64)> = means.iter().map(|&m| (abs1 - m, eps * abs1)).collect();
                let claimed = lower_tail_probability_bound(abs1, za, a, eps, n)?;
                let mut row = BoundCheck::new(BoundFamily::LowerTail, g, n, "lower", eps, frequency_of(&pairs), claimed);
                row.a = Some(a);
                row.statement_claimed = Some(lower_tail_statement_bound(abs1, za, a, eps, n)?);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}
