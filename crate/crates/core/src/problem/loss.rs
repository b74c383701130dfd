//! Loss oracles in three views: scenario-wise F(x, ξ), empirical F̂ = P̂F and
//! population f = PF.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::hardset::{dist, dot, norm, HardSet};
use super::noise::ScenarioLaw;
use super::sample::{SampleMoments, ScenarioSet};
use super::simple::SimpleSet;
use crate::error::{invalid, Result};

/// A deterministic convex function on ℝᵈ.
pub trait ConvexFn: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn subgradient(&self, x: &[f64]) -> Vec<f64>;
}

/// F(x, ξ) with a subgradient in x and a Lipschitz envelope 𝖫(ξ).
pub trait ScenarioLoss: Send + Sync {
    fn value(&self, x: &[f64], xi: &[f64]) -> f64;
    fn subgradient(&self, x: &[f64], xi: &[f64]) -> Vec<f64>;
    fn envelope(&self, xi: &[f64]) -> f64;

    /// Closed-form empirical view from sufficient statistics, if available.
    fn summarize(&self, _moments: &Arc<SampleMoments>) -> Option<Arc<dyn EmpiricalLoss>> {
        None
    }
}

/// The empirical average F̂ plus the sample quantities the theory needs.
pub trait EmpiricalLoss: ConvexFn {
    /// P̂𝖫, a Lipschitz constant of F̂.
    fn envelope_mean(&self) -> f64;
    /// P̂𝖫².
    fn envelope_sq_mean(&self) -> f64;
    /// P̂[F(x,·) − c]².
    fn centered_sq(&self, x: &[f64], c: f64) -> f64;
    /// P̂[F(y,·) − F(x,·) − c]².
    fn pair_centered_sq(&self, y: &[f64], x: &[f64], c: f64) -> f64;
}

/// The population function f with optional closed-form moments.
pub trait PopulationFn: ConvexFn {
    /// σ²(x) = P[F(x,·) − f(x)]².
    fn variance(&self, _x: &[f64]) -> Option<f64> {
        None
    }
    /// P[F(y,·) − F(x,·) − (f(y) − f(x))]².
    fn pair_variance(&self, _y: &[f64], _x: &[f64]) -> Option<f64> {
        None
    }
    /// P𝖫; also a Lipschitz constant of f.
    fn envelope_mean(&self) -> Option<f64> {
        None
    }
    /// L² = P𝖫².
    fn envelope_sq_mean(&self) -> Option<f64> {
        None
    }
    /// ‖𝖫² − L²‖_q.
    fn envelope_sq_centered_norm(&self, _q: f64) -> Option<f64> {
        None
    }
    /// The sublevel set {f ≤ level} when it has a simple geometric form.
    fn sublevel(&self, _level: f64) -> Option<SimpleSet> {
        None
    }
}

// ---------------------------------------------------------------------------
// Term-structured losses: F(x, ξ) = Σ_t w_t · m_t(ξ) · atom_t(x)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "atom", rename_all = "kebab-case")]
pub enum Atom {
    Constant,
    Linear { a: Vec<f64> },
    SquaredDistance { center: Vec<f64> },
    Distance { center: Vec<f64> },
    MaxAffine { slopes: Vec<Vec<f64>>, offsets: Vec<f64> },
}

impl Atom {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Atom::Constant => 1.0,
            Atom::Linear { a } => dot(a, x),
            Atom::SquaredDistance { center } => {
                let d = dist(x, center);
                d * d
            }
            Atom::Distance { center } => dist(x, center),
            Atom::MaxAffine { slopes, offsets } => slopes
                .iter()
                .zip(offsets)
                .map(|(a, b)| dot(a, x) + b)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Atom::Constant => vec![0.0; x.len()],
            Atom::Linear { a } => a.clone(),
            Atom::SquaredDistance { center } => x.iter().zip(center).map(|(a, c)| 2.0 * (a - c)).collect(),
            Atom::Distance { center } => {
                let r = dist(x, center);
                if r == 0.0 {
                    vec![0.0; x.len()]
                } else {
                    x.iter().zip(center).map(|(a, c)| (a - c) / r).collect()
                }
            }
            Atom::MaxAffine { slopes, offsets } => {
                let mut best = 0;
                let mut val = f64::NEG_INFINITY;
                for (j, (a, b)) in slopes.iter().zip(offsets).enumerate() {
                    let v = dot(a, x) + b;
                    if v > val {
                        val = v;
                        best = j;
                    }
                }
                slopes[best].clone()
            }
        }
    }

    /// Lipschitz constant on Y.
    pub fn lipschitz_on(&self, y: &HardSet) -> f64 {
        match self {
            Atom::Constant => 0.0,
            Atom::Linear { a } => norm(a),
            Atom::SquaredDistance { center } => 2.0 * y.max_distance_from(center),
            Atom::Distance { .. } => 1.0,
            Atom::MaxAffine { slopes, .. } => slopes.iter().map(|a| norm(a)).fold(0.0, f64::max),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Atom::Constant | Atom::Linear { .. })
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Atom::Constant => None,
            Atom::Linear { a } => Some(a.len()),
            Atom::SquaredDistance { center } | Atom::Distance { center } => Some(center.len()),
            Atom::MaxAffine { slopes, .. } => slopes.first().map(|s| s.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub atom: Atom,
    pub weight: f64,
    /// Scenario component multiplying this term; `None` means deterministic.
    pub noise: Option<usize>,
}

impl Term {
    pub fn fixed(atom: Atom, weight: f64) -> Self {
        Self { atom, weight, noise: None }
    }

    pub fn noisy(atom: Atom, weight: f64, component: usize) -> Self {
        Self { atom, weight, noise: Some(component) }
    }
}

#[derive(Debug)]
struct TermCore {
    dim: usize,
    terms: Vec<Term>,
    law: ScenarioLaw,
    means: Vec<f64>,
    /// 𝖫(ξ) = c_const + Σ_k c_comp[k]·|ξ_k|.
    c_const: f64,
    c_comp: Vec<f64>,
}

impl TermCore {
    fn multiplier_mean(&self, t: &Term, shift: &[f64]) -> f64 {
        match t.noise {
            None => t.weight,
            Some(k) => t.weight * (self.means[k] + shift[k]),
        }
    }

    /// Constant part and per-component coefficient functions g_k(x).
    fn grouped(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut g0 = 0.0;
        let mut g = vec![0.0; self.means.len()];
        for t in &self.terms {
            let v = t.weight * t.atom.value(x);
            match t.noise {
                None => g0 += v,
                Some(k) => g[k] += v,
            }
        }
        (g0, g)
    }

    fn mean_value(&self, x: &[f64], shift: &[f64]) -> f64 {
        let (g0, g) = self.grouped(x);
        g0 + g.iter().enumerate().map(|(k, gk)| gk * (self.means[k] + shift[k])).sum::<f64>()
    }

    fn mean_subgradient(&self, x: &[f64], shift: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for t in &self.terms {
            let m = self.multiplier_mean(t, shift);
            if m != 0.0 {
                for (o, s) in out.iter_mut().zip(t.atom.subgradient(x)) {
                    *o += m * s;
                }
            }
        }
        out
    }
}

/// A loss that is a finite sum of convex atoms with scenario multipliers.
#[derive(Clone)]
pub struct TermLoss {
    core: Arc<TermCore>,
}

impl TermLoss {
    pub fn new(terms: Vec<Term>, law: &ScenarioLaw, y: &HardSet) -> Result<Self> {
        let dim = y.dim();
        let mut c_const = 0.0;
        let mut c_comp = vec![0.0; law.width()];
        for (idx, t) in terms.iter().enumerate() {
            if let Some(d) = t.atom.dim() {
                if d != dim {
                    return Err(invalid(format!("term {idx} has dimension {d}, expected {dim}")));
                }
            }
            if !t.weight.is_finite() {
                return Err(invalid(format!("term {idx} has non-finite weight")));
            }
            if let Some(k) = t.noise {
                if k >= law.width() {
                    return Err(invalid(format!("term {idx} uses component {k} of a {}-wide law", law.width())));
                }
            }
            if !t.atom.is_affine() {
                let signed = t.noise.map(|k| !law.components[k].is_nonnegative()).unwrap_or(false);
                if t.weight < 0.0 || signed {
                    return Err(invalid(format!(
                        "term {idx}: a nonlinear atom needs a nonnegative multiplier to stay convex"
                    )));
                }
            }
            let l = t.weight.abs() * t.atom.lipschitz_on(y);
            match t.noise {
                None => c_const += l,
                Some(k) => c_comp[k] += l,
            }
        }
        let means = law.components.iter().map(|c| c.mean()).collect();
        Ok(Self {
            core: Arc::new(TermCore { dim, terms, law: law.clone(), means, c_const, c_comp }),
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.core.terms
    }

    pub fn population(&self) -> TermPopulation {
        TermPopulation { core: self.core.clone() }
    }

    pub fn dim(&self) -> usize {
        self.core.dim
    }
}

impl ScenarioLoss for TermLoss {
    fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.core
            .terms
            .iter()
            .map(|t| {
                let m = t.noise.map_or(1.0, |k| xi[k]);
                t.weight * m * t.atom.value(x)
            })
            .sum()
    }

    fn subgradient(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for t in &self.core.terms {
            let m = t.weight * t.noise.map_or(1.0, |k| xi[k]);
            for (o, s) in out.iter_mut().zip(t.atom.subgradient(x)) {
                *o += m * s;
            }
        }
        out
    }

    fn envelope(&self, xi: &[f64]) -> f64 {
        self.core.c_const + self.core.c_comp.iter().zip(xi).map(|(c, v)| c * v.abs()).sum::<f64>()
    }

    fn summarize(&self, moments: &Arc<SampleMoments>) -> Option<Arc<dyn EmpiricalLoss>> {
        if moments.width != self.core.means.len() {
            return None;
        }
        Some(Arc::new(TermEmpirical { core: self.core.clone(), moments: moments.clone() }))
    }
}

struct TermEmpirical {
    core: Arc<TermCore>,
    moments: Arc<SampleMoments>,
}

impl TermEmpirical {
    fn quad(&self, h: f64, g: &[f64]) -> f64 {
        let m = &self.moments;
        let w = m.width;
        let mut s = h * h;
        for k in 0..w {
            s += 2.0 * h * g[k] * m.centered_mean[k];
            for l in 0..w {
                s += g[k] * g[l] * m.centered_second[k * w + l];
            }
        }
        s.max(0.0)
    }
}

impl ConvexFn for TermEmpirical {
    fn value(&self, x: &[f64]) -> f64 {
        self.core.mean_value(x, &self.moments.centered_mean)
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.core.mean_subgradient(x, &self.moments.centered_mean)
    }
}

impl EmpiricalLoss for TermEmpirical {
    fn envelope_mean(&self) -> f64 {
        self.core.c_const + self.core.c_comp.iter().zip(&self.moments.abs_mean).map(|(c, a)| c * a).sum::<f64>()
    }

    fn envelope_sq_mean(&self) -> f64 {
        let c = &self.core.c_comp;
        let w = c.len();
        let m = &self.moments;
        let mut s = self.core.c_const * self.core.c_const;
        for k in 0..w {
            s += 2.0 * self.core.c_const * c[k] * m.abs_mean[k];
            for l in 0..w {
                s += c[k] * c[l] * m.abs_second[k * w + l];
            }
        }
        s
    }

    fn centered_sq(&self, x: &[f64], c: f64) -> f64 {
        let (g0, g) = self.core.grouped(x);
        let h = g0 + g.iter().zip(&self.core.means).map(|(a, b)| a * b).sum::<f64>() - c;
        self.quad(h, &g)
    }

    fn pair_centered_sq(&self, y: &[f64], x: &[f64], c: f64) -> f64 {
        let (gy0, gy) = self.core.grouped(y);
        let (gx0, gx) = self.core.grouped(x);
        let g: Vec<f64> = gy.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let h = gy0 - gx0 + g.iter().zip(&self.core.means).map(|(a, b)| a * b).sum::<f64>() - c;
        self.quad(h, &g)
    }
}

/// Population view of a [`TermLoss`]: f(x) = Σ_t w_t·E[m_t]·atom_t(x).
#[derive(Clone)]
pub struct TermPopulation {
    core: Arc<TermCore>,
}

impl TermPopulation {
    /// Raw moments E𝖫^p for p = 0..=4 when finite.
    fn envelope_moments(&self) -> Option<[f64; 5]> {
        let mut acc = [1.0; 5];
        for (p, v) in acc.iter_mut().enumerate() {
            *v = self.core.c_const.powi(p as i32);
        }
        for (k, &c) in self.core.c_comp.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let law = &self.core.law.components[k];
            let mut term = [0.0; 5];
            for (p, v) in term.iter_mut().enumerate() {
                *v = c.powi(p as i32) * law.abs_moment(p as u32)?;
            }
            let mut next = [0.0; 5];
            for p in 0..5 {
                for j in 0..=p {
                    next[p] += binomial(p, j) * acc[j] * term[p - j];
                }
            }
            acc = next;
        }
        Some(acc)
    }

    fn zero_shift(&self) -> Vec<f64> {
        vec![0.0; self.core.means.len()]
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl ConvexFn for TermPopulation {
    fn value(&self, x: &[f64]) -> f64 {
        self.core.mean_value(x, &self.zero_shift())
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        self.core.mean_subgradient(x, &self.zero_shift())
    }
}

impl PopulationFn for TermPopulation {
    fn variance(&self, x: &[f64]) -> Option<f64> {
        let (_, g) = self.core.grouped(x);
        let mut s = 0.0;
        for (k, gk) in g.iter().enumerate() {
            if *gk != 0.0 {
                s += self.core.law.components[k].variance()? * gk * gk;
            }
        }
        Some(s)
    }

    fn pair_variance(&self, y: &[f64], x: &[f64]) -> Option<f64> {
        let (_, gy) = self.core.grouped(y);
        let (_, gx) = self.core.grouped(x);
        let mut s = 0.0;
        for (k, (a, b)) in gy.iter().zip(&gx).enumerate() {
            let d = a - b;
            if d != 0.0 {
                s += self.core.law.components[k].variance()? * d * d;
            }
        }
        Some(s)
    }

    fn envelope_mean(&self) -> Option<f64> {
        self.envelope_moments().map(|m| m[1]).or_else(|| {
            let mut s = self.core.c_const;
            for (k, &c) in self.core.c_comp.iter().enumerate() {
                if c != 0.0 {
                    s += c * self.core.law.components[k].abs_moment(1)?;
                }
            }
            Some(s)
        })
    }

    fn envelope_sq_mean(&self) -> Option<f64> {
        let mut acc = [1.0, self.core.c_const, self.core.c_const * self.core.c_const];
        for (k, &c) in self.core.c_comp.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let law = &self.core.law.components[k];
            let t = [1.0, c * law.abs_moment(1)?, c * c * law.abs_moment(2)?];
            acc = [1.0, acc[1] + t[1], acc[2] + 2.0 * acc[1] * t[1] + t[2]];
        }
        Some(acc[2])
    }

    fn envelope_sq_centered_norm(&self, q: f64) -> Option<f64> {
        if (q - 2.0).abs() > 1e-12 {
            return None;
        }
        let m = self.envelope_moments()?;
        Some((m[4] - m[2] * m[2]).max(0.0).sqrt())
    }

    fn sublevel(&self, level: f64) -> Option<SimpleSet> {
        let d = self.core.dim;
        let shift = self.zero_shift();
        let mut constant = 0.0;
        let mut linear = vec![0.0; d];
        let mut nonlinear = Vec::new();
        for t in &self.core.terms {
            let w = self.core.multiplier_mean(t, &shift);
            match &t.atom {
                Atom::Constant => constant += w,
                Atom::Linear { a } => {
                    for (l, ai) in linear.iter_mut().zip(a) {
                        *l += w * ai;
                    }
                }
                other => {
                    if w != 0.0 {
                        nonlinear.push((other, w));
                    }
                }
            }
        }
        let rhs = level - constant;
        let has_linear = linear.iter().any(|v| *v != 0.0);
        match (nonlinear.as_slice(), has_linear) {
            ([], _) => Some(SimpleSet::halfspace(linear, rhs)),
            ([(Atom::Distance { center }, w)], false) => Some(SimpleSet::ball(center.clone(), rhs / w)),
            ([(Atom::SquaredDistance { center }, w)], false) => {
                let r2 = rhs / w;
                Some(if r2 < 0.0 { SimpleSet::Nothing } else { SimpleSet::ball(center.clone(), r2.sqrt()) })
            }
            ([(Atom::MaxAffine { slopes, offsets }, w)], false) => Some(SimpleSet::Intersection(
                slopes
                    .iter()
                    .zip(offsets)
                    .map(|(a, b)| SimpleSet::halfspace(a.iter().map(|v| w * v).collect(), rhs - w * b))
                    .collect(),
            )),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Closure-based oracles

type ScenarioClosure = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type ScenarioGradClosure = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type EnvelopeClosure = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A scenario loss given by closures.
#[derive(Clone)]
pub struct FnLoss {
    value: ScenarioClosure,
    subgradient: ScenarioGradClosure,
    envelope: EnvelopeClosure,
}

impl FnLoss {
    pub fn new(
        value: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        subgradient: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        envelope: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), subgradient: Arc::new(subgradient), envelope: Arc::new(envelope) }
    }
}

impl ScenarioLoss for FnLoss {
    fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        (self.value)(x, xi)
    }
    fn subgradient(&self, x: &[f64], xi: &[f64]) -> Vec<f64> {
        (self.subgradient)(x, xi)
    }
    fn envelope(&self, xi: &[f64]) -> f64 {
        (self.envelope)(xi)
    }
}

/// Empirical view computed by direct averaging over a stored sample.
pub struct AveragedLoss {
    loss: Arc<dyn ScenarioLoss>,
    sample: Arc<ScenarioSet>,
}

impl AveragedLoss {
    pub fn new(loss: Arc<dyn ScenarioLoss>, sample: Arc<ScenarioSet>) -> Self {
        Self { loss, sample }
    }

    fn average(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.sample.iter().map(f).sum::<f64>() / self.sample.n() as f64
    }
}

impl ConvexFn for AveragedLoss {
    fn value(&self, x: &[f64]) -> f64 {
        self.average(|xi| self.loss.value(x, xi))
    }

    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for xi in self.sample.iter() {
            for (o, g) in out.iter_mut().zip(self.loss.subgradient(x, xi)) {
                *o += g;
            }
        }
        let n = self.sample.n() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

impl EmpiricalLoss for AveragedLoss {
    fn envelope_mean(&self) -> f64 {
        self.average(|xi| self.loss.envelope(xi))
    }
    fn envelope_sq_mean(&self) -> f64 {
        self.average(|xi| self.loss.envelope(xi).powi(2))
    }
    fn centered_sq(&self, x: &[f64], c: f64) -> f64 {
        self.average(|xi| (self.loss.value(x, xi) - c).powi(2))
    }
    fn pair_centered_sq(&self, y: &[f64], x: &[f64], c: f64) -> f64 {
        self.average(|xi| (self.loss.value(y, xi) - self.loss.value(x, xi) - c).powi(2))
    }
}

type ValueClosure = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradClosure = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A deterministic function given by closures and a Lipschitz constant.
///
/// Serves both as a population function without moment information and as
/// a noise-free empirical function for hand-built perturbations.
#[derive(Clone)]
pub struct FnFunction {
    value: ValueClosure,
    subgradient: GradClosure,
    lipschitz: f64,
    sublevel: Option<Arc<dyn Fn(f64) -> SimpleSet + Send + Sync>>,
}

impl FnFunction {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        subgradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        lipschitz: f64,
    ) -> Self {
        Self { value: Arc::new(value), subgradient: Arc::new(subgradient), lipschitz, sublevel: None }
    }

    /// f(x) = ⟨a, x⟩ + b.
    pub fn affine(a: Vec<f64>, b: f64) -> Self {
        let a1 = a.clone();
        let a2 = a.clone();
        let a3 = a.clone();
        let lip = norm(&a);
        Self {
            value: Arc::new(move |x| dot(&a1, x) + b),
            subgradient: Arc::new(move |_| a2.clone()),
            lipschitz: lip,
            sublevel: Some(Arc::new(move |level| SimpleSet::halfspace(a3.clone(), level - b))),
        }
    }

    /// f(x) = ‖x − center‖₂ − r.
    pub fn distance_minus(center: Vec<f64>, r: f64) -> Self {
        let c1 = center.clone();
        let c2 = center.clone();
        Self {
            value: Arc::new(move |x| dist(x, &c1) - r),
            subgradient: Arc::new(move |x| Atom::Distance { center: c2.clone() }.subgradient(x)),
            lipschitz: 1.0,
            sublevel: Some(Arc::new(move |level| SimpleSet::ball(center.clone(), level + r))),
        }
    }

    /// A constant function.
    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, |x| vec![0.0; x.len()], 0.0)
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

impl ConvexFn for FnFunction {
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        (self.subgradient)(x)
    }
}

impl PopulationFn for FnFunction {
    fn envelope_mean(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
    fn sublevel(&self, level: f64) -> Option<SimpleSet> {
        self.sublevel.as_ref().map(|s| s(level))
    }
}

impl EmpiricalLoss for FnFunction {
    fn envelope_mean(&self) -> f64 {
        self.lipschitz
    }
    fn envelope_sq_mean(&self) -> f64 {
        self.lipschitz * self.lipschitz
    }
    fn centered_sq(&self, x: &[f64], c: f64) -> f64 {
        (self.value(x) - c).powi(2)
    }
    fn pair_centered_sq(&self, y: &[f64], x: &[f64], c: f64) -> f64 {
        (self.value(y) - self.value(x) - c).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::noise::NoiseLaw;
    use crate::rng::SeedLineage;

    fn law() -> ScenarioLaw {
        ScenarioLaw::new(vec![
            NoiseLaw::Pareto { tail_index: 4.5, scale: 1.0 },
            NoiseLaw::StudentT { dof: 6.0, scale: 0.5 },
        ])
        .unwrap()
    }

    fn loss() -> TermLoss {
        let y = HardSet::unit_box(2);
        TermLoss::new(
            vec![
                Term::noisy(Atom::SquaredDistance { center: vec![0.2, -0.1] }, 1.5, 0),
                Term::noisy(Atom::Linear { a: vec![1.0, -2.0] }, 1.0, 1),
                Term::fixed(Atom::MaxAffine { slopes: vec![vec![1.0, 0.0], vec![0.0, 1.0]], offsets: vec![0.0, 0.3] }, 0.7),
                Term::fixed(Atom::Constant, -0.25),
            ],
            &law(),
            &y,
        )
        .unwrap()
    }

    #[test]
    fn closed_form_summary_matches_direct_averaging() {
        let l = loss();
        let sample = Arc::new(ScenarioSet::generate(&law(), 500, SeedLineage::new(3, 1)).unwrap());
        let moments = SampleMoments::compute(&sample, &law());
        let fast = l.summarize(&moments).unwrap();
        let slow = AveragedLoss::new(Arc::new(l.clone()), sample.clone());
        let pop = l.population();
        for x in [[0.1, 0.2], [-0.9, 0.4], [0.5, -0.5]] {
            let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
            assert!(rel(fast.value(&x), slow.value(&x)) < 1e-12);
            let fx = pop.value(&x);
            assert!(rel(fast.centered_sq(&x, fx), slow.centered_sq(&x, fx)) < 1e-10);
            let y = [0.3, 0.3];
            assert!(rel(fast.pair_centered_sq(&y, &x, 0.1), slow.pair_centered_sq(&y, &x, 0.1)) < 1e-10);
            let gf = fast.subgradient(&x);
            let gs = slow.subgradient(&x);
            assert!(gf.iter().zip(&gs).all(|(a, b)| rel(*a, *b) < 1e-12));
        }
        assert!((fast.envelope_mean() - slow.envelope_mean()).abs() < 1e-10);
        assert!((fast.envelope_sq_mean() - slow.envelope_sq_mean()).abs() < 1e-9);
    }

    #[test]
    fn envelope_dominates_differences() {
        let l = loss();
        let mut rng = SeedLineage::new(5, 0).rng();
        let lw = law();
        for _ in 0..200 {
            let mut xi = Vec::new();
            lw.draw_into(&mut rng, &mut xi);
            use rand::Rng;
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = (l.value(&x, &xi) - l.value(&y, &xi)).abs();
            assert!(lhs <= l.envelope(&xi) * dist(&x, &y) + 1e-12);
        }
    }

    #[test]
    fn nonconvex_multiplier_rejected() {
        let y = HardSet::unit_box(1);
        let bad = TermLoss::new(vec![Term::noisy(Atom::Distance { center: vec![0.0] }, 1.0, 1)], &law(), &y);
        assert!(bad.is_err());
    }

    #[test]
    fn envelope_moments_closed_form() {
        let lw = ScenarioLaw::new(vec![NoiseLaw::TwoPoint { low: 0.0, high: 2.0 }]).unwrap();
        let y = HardSet::unit_ball(2);
        let l = TermLoss::new(vec![Term::noisy(Atom::Distance { center: vec![0.0, 0.0] }, 1.0, 0)], &lw, &y).unwrap();
        let p = l.population();
        assert_eq!(p.envelope_sq_mean(), Some(2.0));
        // 𝖫² ∈ {0, 4}: centered 2-norm is 2.
        assert!((p.envelope_sq_centered_norm(2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((p.variance(&[1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sublevel_of_halfspace_and_ball() {
        let lw = ScenarioLaw::new(vec![NoiseLaw::Pareto { tail_index: 3.0, scale: 2.0 / 3.0 }]).unwrap();
        let y = HardSet::unit_box(1);
        let l = TermLoss::new(
            vec![Term::noisy(Atom::Linear { a: vec![1.0] }, 1.0, 0), Term::fixed(Atom::Constant, -0.25)],
            &lw,
            &y,
        )
        .unwrap();
        match l.population().sublevel(0.0).unwrap() {
            SimpleSet::HalfSpace { normal, offset } => assert!((offset / normal[0] - 0.25).abs() < 1e-15),
            other => panic!("unexpected {other:?}"),
        }
    }
}
