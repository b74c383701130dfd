//! Metric entropy, the chaining functional A₁, variance proxies and the
//! sufficient-sample-size calculator.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::parallel::map_indexed;
use crate::problem::{dist, EmpiricalProblem, PopulationOracle, ScenarioSet, StochasticProgram};
use crate::rng::SeedLineage;
use crate::sets::{ray_exit, sample_set, SetSpec};

/// Largest grid the greedy packing will scan.
pub const GRID_CAP: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntropyMethod {
    ExactGreedy,
    VolumetricBound,
}

/// 𝖧(θ) = ln N(θ), N the largest number of points with pairwise distance > θ.
pub fn packing_entropy(set: &SetSpec, theta: f64, method: EntropyMethod) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(invalid(format!("packing scale must be positive, got {theta}")));
    }
    match method {
        EntropyMethod::VolumetricBound => Ok(volumetric(set.dim, set.diameter(), theta)),
        EntropyMethod::ExactGreedy => {
            if set.dim > 3 {
                return Err(invalid("exact packing is limited to dimension 3"));
            }
            greedy_packing(set, theta).map(|n| (n as f64).ln())
        }
    }
}

fn volumetric(d: usize, diameter: f64, theta: f64) -> f64 {
    if theta >= diameter {
        0.0
    } else {
        d as f64 * (1.0 + 2.0 * diameter / theta).ln()
    }
}

fn grid_len(set: &SetSpec, theta: f64) -> Option<usize> {
    let per_side = (2.0 * set.radius / (theta / 10.0)).ceil() as usize + 1;
    per_side.checked_pow(set.dim as u32).filter(|&n| n <= GRID_CAP)
}

/// Greedy packing over members on a grid of pitch θ/10 in the bounding box,
/// topped up with sampled members when the grid misses a thin set.
fn greedy_packing(set: &SetSpec, theta: f64) -> Result<usize> {
    let d = set.dim;
    let pitch = theta / 10.0;
    let per_side = (2.0 * set.radius / pitch).ceil() as usize + 1;
    let total = grid_len(set, theta).ok_or_else(|| invalid(format!("packing grid at scale {theta} exceeds {GRID_CAP} points")))?;
    let lo: Vec<f64> = set.center.iter().map(|c| c - set.radius).collect();
    let point = |mut idx: usize| -> Vec<f64> {
        (0..d)
            .map(|k| {
                let i = idx % per_side;
                idx /= per_side;
                (lo[k] + i as f64 * pitch).min(set.center[k] + set.radius)
            })
            .collect()
    };
    const CHUNK: usize = 4096;
    let chunks = total.div_ceil(CHUNK);
    let mut members: Vec<Vec<f64>> = map_indexed(chunks, |c| {
        (c * CHUNK..((c + 1) * CHUNK).min(total))
            .map(point)
            .filter(|p| dist(p, &set.center) <= set.radius && set.contains(p))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    if members.len() < 2 {
        members.extend(sample_set(set, 4096, &SeedLineage::new(0xe47, 0)).members);
    }
    if members.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut chosen: Vec<Vec<f64>> = Vec::new();
    let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|v| (v / theta).floor() as i64).collect() };
    for p in members {
        let k = key(&p);
        let mut clash = false;
        'scan: for off in 0..3usize.pow(d as u32) {
            let mut o = off;
            let nb: Vec<i64> = k
                .iter()
                .map(|v| {
                    let s = (o % 3) as i64 - 1;
                    o /= 3;
                    v + s
                })
                .collect();
            if let Some(list) = cells.get(&nb) {
                for &j in list {
                    if dist(&chosen[j], &p) <= theta {
                        clash = true;
                        break 'scan;
                    }
                }
            }
        }
        if !clash {
            cells.entry(k).or_default().push(chosen.len());
            chosen.push(p);
        }
    }
    Ok(chosen.len())
}

/// A₁ with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A1Value {
    pub value: f64,
    /// Number of dyadic terms summed.
    pub terms: usize,
    /// Bound on the omitted remainder.
    pub tail_bound: f64,
    pub method: EntropyMethod,
    /// Scales where the exact packing grid was too large and the volumetric
    /// bound was used instead.
    pub volumetric_fallbacks: usize,
}

/// Term-wise majorant valid for both entropy methods.
fn majorant(d: usize, diameter: f64, i: usize) -> f64 {
    let i = i as f64;
    3.0 * diameter / 2f64.powf(i) * ((2.0 * d as f64 * (i + 2.0)).sqrt() + (2.0 * (i + 1.0).ln()).sqrt() + 1.0)
}

/// A₁(M) = Σ_{i≥1} (3D/2ⁱ)(𝖡ᵢ + 1), 𝖡ᵢ = √(𝖧(D/2ⁱ) + 𝖧(D/2ⁱ⁻¹) + ln(i(i+1))),
/// truncated once four times the current majorant is below `tol` times the
/// partial sum.
pub fn a1_functional(set: &SetSpec, method: EntropyMethod, tol: f64) -> Result<A1Value> {
    let d = set.dim;
    let diameter = set.diameter();
    let mut fallbacks = 0;
    let mut out = a1_sum(d, diameter, tol, method, |theta| match method {
        EntropyMethod::ExactGreedy if grid_len(set, theta).is_none() || d > 3 => {
            fallbacks += 1;
            Ok(volumetric(d, diameter, theta))
        }
        _ => packing_entropy(set, theta, method),
    })?;
    out.volumetric_fallbacks = fallbacks;
    Ok(out)
}

fn a1_sum(d: usize, diameter: f64, tol: f64, method: EntropyMethod, mut entropy: impl FnMut(f64) -> Result<f64>) -> Result<A1Value> {
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(invalid(format!("A1 tolerance must lie in (0, 1e-3], got {tol}")));
    }
    let mut out = A1Value { value: 0.0, terms: 0, tail_bound: 0.0, method, volumetric_fallbacks: 0 };
    if diameter == 0.0 {
        return Ok(out);
    }
    let mut h_prev = entropy(diameter)?;
    let mut i = 1usize;
    loop {
        let theta = diameter / 2f64.powi(i as i32);
        let h = entropy(theta)?;
        let b = (h + h_prev + ((i * (i + 1)) as f64).ln()).sqrt();
        out.value += 3.0 * theta * (b + 1.0);
        h_prev = h;
        let tail = 4.0 * majorant(d, diameter, i);
        assert!(i < 2000, "A1 majorant failed to converge");
        if tail <= tol * out.value {
            out.terms = i;
            out.tail_bound = tail;
            break;
        }
        i += 1;
    }
    Ok(out)
}

/// Exact A₁ of a subset of the line. Inside a convex body the set is either
/// an interval (it meets the interior) or the ≤ 2 exit points of the body
/// plus the anchor. Packing numbers are then exact: ⌈L/θ⌉ for an interval of
/// length L and the greedy count for a finite set.
pub fn a1_line(set: &SetSpec, tol: f64) -> Result<A1Value> {
    if set.dim != 1 {
        return Err(invalid("a1_line needs a one-dimensional set"));
    }
    let limit = 2.0 * set.radius + 1.0;
    let interval = |from: f64| {
        let hi = ray_exit(set.membership.as_ref(), &[from], &[1.0], limit)[0];
        let lo = ray_exit(set.membership.as_ref(), &[from], &[-1.0], limit)[0];
        LineShape::Interval(hi - lo)
    };
    let shape = match (&set.body, &set.origin) {
        (Some(body), Some(origin)) => {
            let [hi, lo] = [1.0, -1.0].map(|u| ray_exit(body.as_ref(), origin, &[u], limit)[0]);
            let inner = (1..64).map(|k| lo + (hi - lo) * k as f64 / 64.0).find(|x| set.contains(&[*x]));
            match inner {
                Some(x) => interval(x),
                None => {
                    let mut pts: Vec<f64> = [lo, hi]
                        .into_iter()
                        .filter(|p| set.contains(&[*p]))
                        .chain(set.anchor.iter().map(|a| a[0]))
                        .collect();
                    pts.sort_by(f64::total_cmp);
                    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + set.radius));
                    LineShape::Points(pts)
                }
            }
        }
        _ => match &set.anchor {
            Some(a) => interval(a[0]),
            None => LineShape::Points(vec![]),
        },
    };
    let diameter = match &shape {
        LineShape::Interval(l) => *l,
        LineShape::Points(p) if p.is_empty() => return Err(Error::EmptySet),
        LineShape::Points(p) => p[p.len() - 1] - p[0],
    };
    a1_sum(1, diameter, tol, EntropyMethod::ExactGreedy, |theta| Ok((shape.packing(theta) as f64).ln()))
}

enum LineShape {
    Interval(f64),
    Points(Vec<f64>),
}

impl LineShape {
    /// Largest number of points with pairwise distance > θ.
    fn packing(&self, theta: f64) -> usize {
        match self {
            LineShape::Interval(l) => ((l / theta).ceil() as usize).max(1),
            LineShape::Points(p) => {
                let mut count = 0;
                let mut last = f64::NEG_INFINITY;
                for &x in p {
                    if x - last > theta {
                        count += 1;
                        last = x;
                    }
                }
                count
            }
        }
    }
}

/// [`a1_line`] in one dimension, exact-greedy A₁ up to dimension 2 and the
/// volumetric bound above.
pub fn a1_auto(set: &SetSpec, tol: f64) -> Result<A1Value> {
    match set.dim {
        1 => a1_line(set, tol),
        2 => a1_functional(set, EntropyMethod::ExactGreedy, tol),
        _ => a1_functional(set, EntropyMethod::VolumetricBound, tol),
    }
}

/// Lipschitz moduli L² = P𝖫² and 𝖫̂² = P̂𝖫² for index i.
pub fn lipschitz_moduli(
    program: &StochasticProgram,
    emp: &EmpiricalProblem,
    oracle: &PopulationOracle,
    i: usize,
) -> Result<(f64, f64)> {
    check_index(program, i)?;
    let pop = match oracle.function(i).envelope_sq_mean() {
        Some(v) => v,
        None => control_average(program, |xi| program.losses[i].envelope(xi).powi(2))?,
    };
    Ok((pop, emp.fns[i].envelope_sq_mean()))
}

fn check_index(program: &StochasticProgram, i: usize) -> Result<()> {
    if i > program.m() {
        Err(Error::IndexOutOfRange { index: i, m: program.m() })
    } else {
        Ok(())
    }
}

/// Control-sample size used when a population moment has no closed form.
pub const CONTROL_SAMPLE: usize = 100_000;

fn control_average(program: &StochasticProgram, f: impl Fn(&[f64]) -> f64) -> Result<f64> {
    let sample = ScenarioSet::generate(&program.law, CONTROL_SAMPLE, SeedLineage::new(0xc0de, 0))?;
    Ok(sample.iter().map(f).sum::<f64>() / sample.n() as f64)
}

/// σᵢ²(x), by closed form or control sample; the flag reports the latter.
pub fn population_variance(program: &StochasticProgram, oracle: &PopulationOracle, i: usize, x: &[f64]) -> Result<(f64, bool)> {
    check_index(program, i)?;
    if let Some(v) = oracle.function(i).variance(x) {
        return Ok((v.max(0.0), false));
    }
    let f = oracle.value(i, x);
    Ok((control_average(program, |xi| (program.losses[i].value(x, xi) - f).powi(2))?, true))
}

/// σ̂ᵢ²(x) = P̂[Fᵢ(x,·) − fᵢ(x)]², centred at the population value.
pub fn empirical_variance(emp: &EmpiricalProblem, oracle: &PopulationOracle, i: usize, x: &[f64]) -> f64 {
    emp.fns[i].centered_sq(x, oracle.value(i, x)).max(0.0)
}

/// v₀²(y,x) = (P + P̂)[F₀(y,·) − F₀(x,·) − (f₀(y) − f₀(x))]².
pub fn pair_variance(
    program: &StochasticProgram,
    emp: &EmpiricalProblem,
    oracle: &PopulationOracle,
    y: &[f64],
    x: &[f64],
) -> Result<(f64, bool)> {
    let c = oracle.value(0, y) - oracle.value(0, x);
    let (pop, est) = match oracle.function(0).pair_variance(y, x) {
        Some(v) => (v.max(0.0), false),
        None => (control_average(program, |xi| (program.losses[0].value(y, xi) - program.losses[0].value(x, xi) - c).powi(2))?, true),
    };
    Ok((pop + emp.fns[0].pair_centered_sq(y, x, c).max(0.0), est))
}

/// v_I²(x) = supᵢ (σ̂ᵢ²(x) + σᵢ²(x)) over the constraints; 0 when m = 0.
pub fn constraint_variance(
    program: &StochasticProgram,
    emp: &EmpiricalProblem,
    oracle: &PopulationOracle,
    x: &[f64],
) -> Result<f64> {
    let mut best = 0.0f64;
    for i in 1..=program.m() {
        best = best.max(population_variance(program, oracle, i, x)?.0 + empirical_variance(emp, oracle, i, x));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceProxyReport {
    /// σᵢ²(x), i = 0..=m.
    pub sigma_sq: Vec<f64>,
    /// σ̂ᵢ²(x), i = 0..=m.
    pub sigma_hat_sq: Vec<f64>,
    pub v0_sq: f64,
    pub v_i_sq: f64,
    /// Lᵢ² = P𝖫ᵢ².
    pub lipschitz_sq: Vec<f64>,
    /// 𝖫̂ᵢ² = P̂𝖫ᵢ².
    pub lipschitz_hat_sq: Vec<f64>,
    /// A₁ of the set attached to each index.
    pub a1: Vec<f64>,
    /// σ̂₀(Z) = A₁(Z)·√(𝖫̂₀² + L₀²).
    pub sigma_hat_0: f64,
    /// Per-constraint A₁(setᵢ)·√(𝖫̂ᵢ² + Lᵢ²).
    pub sigma_hat_per_constraint: Vec<f64>,
    /// σ̂_{I,γ}, the sup of the per-constraint values.
    pub sigma_hat_i: f64,
    pub gamma: f64,
    /// Some population moment came from a control sample.
    pub estimated: bool,
}

/// All variance proxies at (x, y). `sets[0]` localizes the objective and
/// `sets[i]` constraint i.
#[allow(clippy::too_many_arguments)]
pub fn variance_proxies(
    program: &StochasticProgram,
    sample: &Arc<ScenarioSet>,
    oracle: &PopulationOracle,
    x: &[f64],
    y: &[f64],
    sets: &[SetSpec],
    gamma: f64,
    method: EntropyMethod,
) -> Result<VarianceProxyReport> {
    let m = program.m();
    if sets.is_empty() {
        return Err(Error::Missing("set localizing the objective"));
    }
    if m >= 1 && sets.len() < m + 1 {
        return Err(Error::Missing("sets localizing the constraints"));
    }
    let a1 = sets[..=m].iter().map(|s| a1_functional(s, method, 1e-4).map(|a| a.value)).collect::<Result<Vec<_>>>()?;
    variance_proxies_with_a1(program, sample, oracle, x, y, &a1, gamma)
}

/// As [`variance_proxies`] with A₁ values precomputed, one per index 0..=m.
pub fn variance_proxies_with_a1(
    program: &StochasticProgram,
    sample: &Arc<ScenarioSet>,
    oracle: &PopulationOracle,
    x: &[f64],
    y: &[f64],
    a1: &[f64],
    gamma: f64,
) -> Result<VarianceProxyReport> {
    let m = program.m();
    if a1.len() != m + 1 {
        return Err(Error::Dimension { expected: m + 1, got: a1.len() });
    }
    program.check_point(x)?;
    program.check_point(y)?;
    let emp = program.empirical(sample);
    let mut estimated = false;
    let mut r = VarianceProxyReport {
        sigma_sq: vec![],
        sigma_hat_sq: vec![],
        v0_sq: 0.0,
        v_i_sq: 0.0,
        lipschitz_sq: vec![],
        lipschitz_hat_sq: vec![],
        a1: a1.to_vec(),
        sigma_hat_0: 0.0,
        sigma_hat_per_constraint: vec![],
        sigma_hat_i: 0.0,
        gamma,
        estimated: false,
    };
    for i in 0..=m {
        let (s, e) = population_variance(program, oracle, i, x)?;
        estimated |= e;
        r.sigma_sq.push(s);
        r.sigma_hat_sq.push(empirical_variance(&emp, oracle, i, x));
        let (l, lh) = lipschitz_moduli(program, &emp, oracle, i)?;
        r.lipschitz_sq.push(l);
        r.lipschitz_hat_sq.push(lh);
    }
    let (v0, e) = pair_variance(program, &emp, oracle, y, x)?;
    estimated |= e;
    r.v0_sq = v0;
    r.v_i_sq = (1..=m).map(|i| r.sigma_sq[i] + r.sigma_hat_sq[i]).fold(0.0, f64::max);
    r.sigma_hat_0 = a1[0] * (r.lipschitz_hat_sq[0] + r.lipschitz_sq[0]).sqrt();
    r.sigma_hat_per_constraint = (1..=m).map(|i| a1[i] * (r.lipschitz_hat_sq[i] + r.lipschitz_sq[i]).sqrt()).collect();
    r.sigma_hat_i = r.sigma_hat_per_constraint.iter().copied().fold(0.0, f64::max);
    r.estimated = estimated;
    Ok(r)
}

/// Default moment-inequality constant c_q = 2q.
pub fn default_cq(q: f64) -> f64 {
    2.0 * q
}

/// The two branches of the sufficient sample size, before rounding.
pub fn sample_size_branches(q: f64, rho: f64, eps: f64, l0_sq: f64, centered_norm: f64, a1: f64, c_q: f64) -> Result<(f64, f64)> {
    if !(q > 1.0) {
        return Err(invalid(format!("moment order q must exceed 1, got {q}")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(invalid(format!("confidence level must lie in (0, 1], got {rho}")));
    }
    if !(eps > 0.0) {
        return Err(invalid(format!("accuracy must be positive, got {eps}")));
    }
    if l0_sq < 0.0 || centered_norm < 0.0 || a1 < 0.0 || c_q < 0.0 {
        return Err(invalid("moment inputs must be nonnegative"));
    }
    let cq = (l0_sq + c_q * centered_norm) * a1 * a1;
    Ok(((3.0 / rho).powf(1.0 / (q - 1.0)), 4.0 * cq * (1.0 + (3.0 / rho).ln()) / (eps * eps)))
}

/// N = ⌈max{(3/ρ)^{1/(q−1)}, 4C_q(1 + ln(3/ρ))/ε²}⌉ with
/// C_q = [L₀² + c_q‖𝖫₀² − L₀²‖_q]·A₁².
pub fn sufficient_sample_size(q: f64, rho: f64, eps: f64, l0_sq: f64, centered_norm: f64, a1: f64, c_q: f64) -> Result<u64> {
    let (a, b) = sample_size_branches(q, rho, eps, l0_sq, centered_norm, a1, c_q)?;
    Ok(a.max(b).ceil() as u64)
}
