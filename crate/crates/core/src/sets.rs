//! Localized sets: membership oracles, bounding balls, and a boundary sampler.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{dist, PopulationOracle};
use crate::rng::SeedLineage;

pub type Membership = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Which localized set a [`SetSpec`] realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetLabel {
    /// X*_γ = {x ∈ X : f(x) ≤ f* + γ}.
    NearOptimal,
    /// X*₀,γ = {x ∈ X : f(x) = f* + γ}.
    LevelObjective,
    /// X*ᵢ,γ = {x ∈ X : f(x) ≤ f* + γ, fᵢ(x) = 0}.
    ActiveConstraint(usize),
    /// 𝕏*₀,γ = {x ∈ 𝕏_{𝔠γ} : f(x) = f* + γ}.
    ExteriorLevelObjective,
    /// 𝕏*ᵢ,γ = {x ∈ 𝕏_{𝔠γ} : f(x) ≤ f* + γ, fᵢ(x) = γ}.
    ExteriorActiveConstraint(usize),
    /// 𝔛*₀,γ = {x ∈ X : f(x) = f* + γ + gap(γ)}.
    GapLevelObjective,
    /// 𝔛*ᵢ,γ = {x ∈ X : f(x) ≤ f* + γ + gap(γ), fᵢ(x) = 0}.
    GapActiveConstraint(usize),
    /// {x ∈ X_γ : f(x) = min_{X_γ} f + ε}.
    RelaxedLevelObjective,
    /// {x ∈ X_γ : f(x) ≤ min_{X_γ} f + ε, fᵢ(x) = γ}.
    RelaxedActiveConstraint(usize),
    Custom,
}

/// A set given by a membership oracle, a bounding ball and, for sets lying
/// on the boundary of a convex body, the body itself with an interior point.
#[derive(Clone)]
pub struct SetSpec {
    pub label: SetLabel,
    pub gamma: f64,
    pub dim: usize,
    pub membership: Membership,
    /// Convex body whose boundary contains the set.
    pub body: Option<Membership>,
    /// A point of the body from which rays are cast.
    pub origin: Option<Vec<f64>>,
    /// A member of the set, when one was found.
    pub anchor: Option<Vec<f64>>,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl fmt::Debug for SetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SetSpec")
            .field("label", &self.label)
            .field("gamma", &self.gamma)
            .field("center", &self.center)
            .field("radius", &self.radius)
            .field("anchor", &self.anchor)
            .finish()
    }
}

impl SetSpec {
    pub fn new(label: SetLabel, gamma: f64, center: Vec<f64>, radius: f64, membership: Membership) -> Self {
        Self { label, gamma, dim: center.len(), membership, body: None, origin: None, anchor: None, center, radius }
    }

    pub fn with_body(mut self, body: Membership, origin: Vec<f64>) -> Self {
        self.body = Some(body);
        self.origin = Some(origin);
        self.anchor = self.find_anchor();
        self
    }

    /// The Euclidean ball {‖x − c‖ ≤ r}.
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        let c = center.clone();
        let member: Membership = Arc::new(move |x: &[f64]| dist(x, &c) <= radius * (1.0 + 1e-12));
        let mut s = Self::new(SetLabel::Custom, 0.0, center.clone(), radius, member.clone());
        s.body = Some(member);
        s.origin = Some(center.clone());
        s.anchor = Some(center);
        s
    }

    /// A single point.
    pub fn singleton(p: Vec<f64>) -> Self {
        let c = p.clone();
        let member: Membership = Arc::new(move |x: &[f64]| dist(x, &c) <= 1e-12);
        let mut s = Self::new(SetLabel::Custom, 0.0, p.clone(), 0.0, member);
        s.anchor = Some(p);
        s
    }

    /// Axis-aligned box as a set.
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let radius = 0.5 * dist(&lo, &hi);
        let (l, h) = (lo.clone(), hi.clone());
        let member: Membership =
            Arc::new(move |x: &[f64]| x.iter().zip(l.iter().zip(&h)).all(|(v, (a, b))| *v >= *a - 1e-12 && *v <= *b + 1e-12));
        let mut s = Self::new(SetLabel::Custom, 0.0, center.clone(), radius, member.clone());
        s.body = Some(member);
        s.origin = Some(center.clone());
        s.anchor = Some(center);
        s
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (self.membership)(x)
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// The same set with its bounding ball scaled about the origin of ℝᵈ.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.membership.clone();
        let member: Membership = Arc::new(move |x: &[f64]| {
            let y: Vec<f64> = x.iter().map(|v| v / c).collect();
            inner(&y)
        });
        let mut s = Self::new(self.label, self.gamma, self.center.iter().map(|v| v * c).collect(), self.radius * c, member);
        if let (Some(body), Some(origin)) = (&self.body, &self.origin) {
            let b = body.clone();
            let scaled_body: Membership = Arc::new(move |x: &[f64]| {
                let y: Vec<f64> = x.iter().map(|v| v / c).collect();
                b(&y)
            });
            s.body = Some(scaled_body);
            s.origin = Some(origin.iter().map(|v| v * c).collect());
        }
        s.anchor = self.anchor.as_ref().map(|a| a.iter().map(|v| v * c).collect());
        s
    }

    fn find_anchor(&self) -> Option<Vec<f64>> {
        let origin = self.origin.as_ref()?;
        if self.contains(origin) {
            return Some(origin.clone());
        }
        let body = self.body.as_ref()?;
        directions(self.dim, 16, &SeedLineage::new(0x5eed, 1))
            .into_iter()
            .map(|u| ray_exit(body.as_ref(), origin, &u, self.ray_limit(origin)))
            .find(|p| self.contains(p))
    }

    fn ray_limit(&self, origin: &[f64]) -> f64 {
        2.0 * self.radius + dist(origin, &self.center) + 1e-9
    }
}

/// Boundary point of a convex body along a ray, by 64 bisection steps;
/// the returned point is the inner end of the final bracket.
pub fn ray_exit(body: &(dyn Fn(&[f64]) -> bool + Send + Sync), a: &[f64], u: &[f64], limit: f64) -> Vec<f64> {
    let at = |t: f64| -> Vec<f64> { a.iter().zip(u).map(|(p, v)| p + t * v).collect() };
    let mut hi = limit.max(1e-12);
    let mut grow = 0;
    while body(&at(hi)) && grow < 60 {
        hi *= 2.0;
        grow += 1;
    }
    let mut lo = 0.0;
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if body(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// Ray directions: ±1 in 1-D, the golden-angle sequence in 2-D, seeded
/// Gaussian directions otherwise. Every prefix is itself a valid sequence.
pub fn directions(d: usize, n: usize, lineage: &SeedLineage) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n).map(|k| {
            let t = k as f64 * GOLDEN_ANGLE;
            vec![t.cos(), t.sin()]
        })
        .collect(),
        _ => {
            let mut rng = lineage.rng();
            (0..n)
                .map(|_| loop {
                    let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
                    let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if r > 1e-9 {
                        break v.iter().map(|a| a / r).collect();
                    }
                })
                .collect()
        }
    }
}

/// Points drawn from a set, in deterministic order.
#[derive(Debug, Clone, Default)]
pub struct SetSample {
    pub members: Vec<Vec<f64>>,
    /// All ray-boundary points, members or not.
    pub boundary: Vec<Vec<f64>>,
    /// Largest gap between neighbouring boundary points.
    pub mesh: f64,
    pub evaluated: usize,
}

/// Samples a set: ¾ of the budget on rays from a refined interior point of
/// the body (boundary by bisection), ¼ on rejection draws from the ball.
pub fn sample_set(spec: &SetSpec, budget: usize, lineage: &SeedLineage) -> SetSample {
    let mut out = SetSample::default();
    let rays = if spec.body.is_some() { budget * 3 / 4 } else { 0 };
    if let (Some(body), Some(origin)) = (&spec.body, &spec.origin) {
        if body(origin) {
            let limit = spec.ray_limit(origin);
            let mut a = origin.clone();
            for round in 0..2 {
                let exits: Vec<Vec<f64>> = directions(spec.dim, 64, &lineage.child(100 + round))
                    .iter()
                    .map(|u| ray_exit(body.as_ref(), &a, u, limit))
                    .collect();
                let centroid: Vec<f64> =
                    (0..spec.dim).map(|k| exits.iter().map(|p| p[k]).sum::<f64>() / exits.len() as f64).collect();
                if body(&centroid) {
                    a = centroid;
                }
            }
            let dirs = directions(spec.dim, rays, &lineage.child(1));
            for u in &dirs {
                let p = ray_exit(body.as_ref(), &a, u, limit);
                out.evaluated += 1;
                if spec.contains(&p) {
                    out.members.push(p.clone());
                }
                out.boundary.push(p);
            }
            if spec.contains(&a) {
                out.members.push(a.clone());
            }
            out.mesh = boundary_mesh(&out.boundary, &a);
        }
    }
    let mut rng = lineage.child(2).rng();
    for _ in 0..budget.saturating_sub(rays) {
        let p = uniform_in_ball(&mut rng, &spec.center, spec.radius);
        out.evaluated += 1;
        if spec.contains(&p) {
            out.members.push(p);
        }
    }
    if let Some(anchor) = &spec.anchor {
        out.members.push(anchor.clone());
    }
    out
}

fn uniform_in_ball<R: Rng>(rng: &mut R, c: &[f64], r: f64) -> Vec<f64> {
    let d = c.len();
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
            return v.iter().zip(c).map(|(a, b)| b + r * a).collect();
        }
    }
}

/// 1-D: zero (rays hit the endpoints exactly). 2-D: largest chord between
/// angularly consecutive points. Higher d: twice the largest nearest-neighbour
/// distance.
fn boundary_mesh(points: &[Vec<f64>], a: &[f64]) -> f64 {
    match a.len() {
        1 => 0.0,
        2 => {
            if points.len() < 2 {
                return 0.0;
            }
            let mut sorted: Vec<(f64, &Vec<f64>)> =
                points.iter().map(|p| ((p[1] - a[1]).atan2(p[0] - a[0]), p)).collect();
            sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
            let n = sorted.len();
            (0..n).map(|k| dist(sorted[k].1, sorted[(k + 1) % n].1)).fold(0.0, f64::max)
        }
        _ => {
            let mut worst = 0.0f64;
            for (i, p) in points.iter().enumerate() {
                let nn = points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| dist(p, q))
                    .fold(f64::INFINITY, f64::min);
                if nn.is_finite() {
                    worst = worst.max(nn);
                }
            }
            2.0 * worst
        }
    }
}

/// Equality tolerance η = 1e-6·max(1, |f*|).
pub fn level_tolerance(fstar: f64) -> f64 {
    1e-6 * fstar.abs().max(1.0)
}

/// Ball around x* containing {x ∈ 𝕏_r : f(x) ≤ f* + s}, intersected (by
/// taking the smaller) with the circumball of Y.
pub fn localized_ball(oracle: &PopulationOracle, excess: f64, outside: f64) -> (Vec<f64>, f64) {
    let y = &oracle.hard_set;
    let fallback = (y.center.clone(), y.circumradius());
    let Some(g) = oracle.growth else { return fallback };
    let r = if outside > 0.0 {
        let Some(l) = oracle.lipschitz(0) else { return fallback };
        g.radius(excess + l * outside) + outside
    } else {
        g.radius(excess)
    };
    if r < fallback.1 {
        (oracle.xstar.clone(), r * (1.0 + 1e-9) + 1e-12)
    } else {
        fallback
    }
}

/// Membership oracle, body and bounding ball for a labeled localized set.
pub fn localized_set_spec(oracle: &Arc<PopulationOracle>, label: SetLabel, gamma: f64) -> Result<SetSpec> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be nonnegative, got {gamma}")));
    }
    let eta = level_tolerance(oracle.fstar);
    let fstar = oracle.fstar;
    let o = oracle.clone();
    let in_x = move |x: &[f64]| o.hard_set.contains(x) && o.in_relaxed(x, 0.0);
    let constraint_index = |i: usize| -> Result<usize> {
        if i == 0 || i > oracle.m() {
            Err(Error::IndexOutOfRange { index: i, m: oracle.m() })
        } else {
            Ok(i)
        }
    };
    let (level, outside, member, body): (f64, f64, Membership, Membership) = match label {
        SetLabel::NearOptimal => {
            let o = oracle.clone();
            let level = fstar + gamma;
            let m: Membership = Arc::new(move |x: &[f64]| in_x(x) && o.objective.value(x) <= level + eta);
            (level, 0.0, m.clone(), m)
        }
        SetLabel::LevelObjective | SetLabel::GapLevelObjective => {
            let extra = if label == SetLabel::GapLevelObjective { oracle.gap(gamma)? } else { 0.0 };
            let level = fstar + gamma + extra;
            let (o1, o2) = (oracle.clone(), oracle.clone());
            let in_x2 = in_x.clone();
            let m: Membership = Arc::new(move |x: &[f64]| in_x(x) && (o1.objective.value(x) - level).abs() <= eta);
            let b: Membership = Arc::new(move |x: &[f64]| in_x2(x) && o2.objective.value(x) <= level);
            (level, 0.0, m, b)
        }
        SetLabel::ActiveConstraint(i) | SetLabel::GapActiveConstraint(i) => {
            let i = constraint_index(i)?;
            let extra = if matches!(label, SetLabel::GapActiveConstraint(_)) { oracle.gap(gamma)? } else { 0.0 };
            let level = fstar + gamma + extra;
            let (o1, o2) = (oracle.clone(), oracle.clone());
            let in_x2 = in_x.clone();
            let m: Membership = Arc::new(move |x: &[f64]| {
                in_x(x) && o1.objective.value(x) <= level + eta && o1.value(i, x).abs() <= eta
            });
            let b: Membership = Arc::new(move |x: &[f64]| in_x2(x) && o2.objective.value(x) <= level);
            (level, 0.0, m, b)
        }
        SetLabel::ExteriorLevelObjective | SetLabel::ExteriorActiveConstraint(_) => {
            let c = oracle.mr_constant.ok_or(Error::Missing("metric regularity constant"))?;
            if oracle.feasible_set().is_none() {
                return Err(Error::Missing("projection onto X"));
            }
            let r = c * gamma;
            let level = fstar + gamma;
            let o0 = oracle.clone();
            let in_xx = move |x: &[f64]| o0.hard_set.contains(x) && o0.dist_to_feasible(x).is_some_and(|d| d <= r * (1.0 + 1e-12));
            let (o1, o2) = (oracle.clone(), oracle.clone());
            let in_xx2 = in_xx.clone();
            match label {
                SetLabel::ExteriorLevelObjective => {
                    let m: Membership = Arc::new(move |x: &[f64]| in_xx(x) && (o1.objective.value(x) - level).abs() <= eta);
                    let b: Membership = Arc::new(move |x: &[f64]| in_xx2(x) && o2.objective.value(x) <= level);
                    (level, r, m, b)
                }
                SetLabel::ExteriorActiveConstraint(i) => {
                    let i = constraint_index(i)?;
                    let m: Membership = Arc::new(move |x: &[f64]| {
                        in_xx(x) && o1.objective.value(x) <= level + eta && (o1.value(i, x) - gamma).abs() <= eta
                    });
                    let b: Membership = Arc::new(move |x: &[f64]| {
                        in_xx2(x) && o2.objective.value(x) <= level && o2.value(i, x) <= gamma
                    });
                    (level, r, m, b)
                }
                _ => unreachable!(),
            }
        }
        SetLabel::Custom | SetLabel::RelaxedLevelObjective | SetLabel::RelaxedActiveConstraint(_) => {
            return Err(Error::InvalidParameter(format!("{label:?} is not built from a single level")))
        }
    };
    let (center, radius) = localized_ball(oracle, level - fstar + eta, outside);
    Ok(SetSpec::new(label, gamma, center, radius, member).with_body(body, oracle.xstar.clone()))
}

/// Level sets of f over the functional relaxation X_γ (γ of either sign):
/// the objective level {f = min_{X_γ} f + ε} or, with `constraint = Some(i)`,
/// the active face {f ≤ min_{X_γ} f + ε, fᵢ = γ}.
pub fn relaxed_level_spec(oracle: &Arc<PopulationOracle>, gamma: f64, eps: f64, constraint: Option<usize>) -> Result<SetSpec> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be nonnegative, got {eps}")));
    }
    if let Some(i) = constraint {
        if i == 0 || i > oracle.m() {
            return Err(Error::IndexOutOfRange { index: i, m: oracle.m() });
        }
    }
    let (min, argmin) = oracle.relaxed_min(gamma)?;
    let eta = level_tolerance(oracle.fstar);
    let level = min + eps;
    let o0 = oracle.clone();
    let in_xg = move |x: &[f64]| o0.hard_set.contains(x) && o0.in_relaxed(x, gamma);
    let (o1, o2) = (oracle.clone(), oracle.clone());
    let in_xg2 = in_xg.clone();
    let body: Membership = Arc::new(move |x: &[f64]| in_xg2(x) && o2.objective.value(x) <= level);
    let (label, member): (SetLabel, Membership) = match constraint {
        None => (
            SetLabel::RelaxedLevelObjective,
            Arc::new(move |x: &[f64]| in_xg(x) && (o1.objective.value(x) - level).abs() <= eta),
        ),
        Some(i) => (
            SetLabel::RelaxedActiveConstraint(i),
            Arc::new(move |x: &[f64]| {
                in_xg(x) && o1.objective.value(x) <= level + eta && (o1.value(i, x) - gamma).abs() <= eta
            }),
        ),
    };
    let (center, radius) = if gamma <= 0.0 {
        localized_ball(oracle, level - oracle.fstar + eta, 0.0)
    } else {
        match oracle.mr_constant {
            Some(c) => localized_ball(oracle, level - oracle.fstar + eta, c * gamma),
            None => (oracle.hard_set.center.clone(), oracle.hard_set.circumradius()),
        }
    };
    Ok(SetSpec::new(label, gamma, center, radius, member).with_body(body, argmin))
}
