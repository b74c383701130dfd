//! Heavy-tailed constrained least squares over a moment-weighted ℓ1 ball.
//!
//! Design rows are 𝐱 = A·z with z i.i.d. standardized Student-t, responses
//! y = ⟨x_true, 𝐱⟩ + noise with noise independent of the design. The
//! estimator minimizes the empirical squared loss over {‖D̂₃x‖₁ ≤ R}; the
//! reference point x* minimizes the population loss over {‖D₃x‖₁ ≤ (1+α)R}.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::parallel::map_indexed;
use crate::problem::NoiseLaw;
use crate::rng::{splitmix64, SeedLineage};
use crate::solver::{solve_lasso, solve_quadratic_l1, weighted_l1, QuadraticModel};
use crate::stats::{loglog_slope, median, Wilson};

/// Draws used when a population moment has no closed form.
pub const CONTROL_DRAWS: usize = 200_000;
/// Duality gap for the population solution x*.
pub const XSTAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DesignTail {
    StudentT { dof: f64 },
    Gaussian,
}

impl DesignTail {
    /// Law of a single standardized coordinate of z.
    pub fn law(&self) -> NoiseLaw {
        match *self {
            DesignTail::StudentT { dof } => NoiseLaw::StudentT { dof, scale: ((dof - 2.0) / dof).sqrt() },
            DesignTail::Gaussian => NoiseLaw::Normal { scale: 1.0 },
        }
    }

    fn has_moment(&self, q: f64) -> bool {
        match *self {
            DesignTail::StudentT { dof } => dof > q,
            DesignTail::Gaussian => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub dim: usize,
    pub tail: DesignTail,
    /// Row-major d×d mixing matrix A.
    pub mixing: Vec<f64>,
    pub noise: NoiseLaw,
    pub x_true: Vec<f64>,
    /// Moment order the experiment relies on.
    pub q: u32,
}

impl DesignSpec {
    pub fn identity(dim: usize, tail: DesignTail, noise: NoiseLaw, x_true: Vec<f64>, q: u32) -> Self {
        let mut mixing = vec![0.0; dim * dim];
        for l in 0..dim {
            mixing[l * dim + l] = 1.0;
        }
        Self { dim, tail, mixing, noise, x_true, q }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if d == 0 {
            return Err(invalid("design dimension must be positive"));
        }
        if self.mixing.len() != d * d {
            return Err(Error::Dimension { expected: d * d, got: self.mixing.len() });
        }
        if self.x_true.len() != d {
            return Err(Error::Dimension { expected: d, got: self.x_true.len() });
        }
        if let DesignTail::StudentT { dof } = self.tail {
            if !(dof > 2.0) {
                return Err(invalid(format!("design dof must exceed 2, got {dof}")));
            }
        }
        if !self.tail.has_moment(self.q as f64) {
            return Err(invalid(format!("design tail has no finite moment of order q = {}", self.q)));
        }
        self.noise.validate()?;
        if self.noise.mean() != 0.0 || self.noise.abs_moment(6).is_none() {
            return Err(invalid("noise must be centered with a finite sixth moment"));
        }
        if cholesky(&self.covariance(), d).is_none() {
            return Err(invalid("mixing matrix is not full rank"));
        }
        Ok(())
    }

    pub fn is_diagonal(&self) -> bool {
        let d = self.dim;
        (0..d).all(|k| (0..d).all(|l| k == l || self.mixing[k * d + l] == 0.0))
    }

    /// Σ = A·Aᵀ since z has identity covariance.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let a = &self.mixing;
        let mut s = vec![0.0; d * d];
        for k in 0..d {
            for l in 0..d {
                s[k * d + l] = (0..d).map(|j| a[k * d + j] * a[l * d + j]).sum();
            }
        }
        s
    }

    fn draw_row<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], row: &mut [f64]) {
        let law = self.tail.law();
        for zk in z.iter_mut() {
            *zk = law.sample(rng);
        }
        let d = self.dim;
        for (k, r) in row.iter_mut().enumerate() {
            *r = dot(&self.mixing[k * d..(k + 1) * d], z);
        }
    }

    /// P|𝐱[ℓ]|^q: closed form for diagonal mixing, control sample otherwise.
    pub fn abs_moments(&self, q: f64) -> Vec<f64> {
        let d = self.dim;
        let law = self.tail.law();
        if self.is_diagonal() {
            let m = law.abs_moment_real(q).unwrap_or(f64::INFINITY);
            return (0..d).map(|l| self.mixing[l * d + l].abs().powf(q) * m).collect();
        }
        if q == 2.0 {
            let s = self.covariance();
            return (0..d).map(|l| s[l * d + l]).collect();
        }
        let mut rng = control_lineage().rng();
        let mut z = vec![0.0; d];
        let mut row = vec![0.0; d];
        let mut acc = vec![0.0; d];
        for _ in 0..CONTROL_DRAWS {
            self.draw_row(&mut rng, &mut z, &mut row);
            for (a, r) in acc.iter_mut().zip(&row) {
                *a += r.abs().powf(q);
            }
        }
        acc.iter().map(|a| a / CONTROL_DRAWS as f64).collect()
    }

    /// E(⟨w, 𝐱⟩ + noise)⁶, exact: ⟨w, Az⟩ = ⟨Aᵀw, z⟩ is a sum of independent
    /// symmetric terms, so even moments convolve.
    pub fn sixth_moment(&self, w: &[f64]) -> f64 {
        let d = self.dim;
        let law = self.tail.law();
        let base = [1.0, moment(&law, 2.0), moment(&law, 4.0), moment(&law, 6.0)];
        let mut acc = [1.0, 0.0, 0.0, 0.0];
        for k in 0..d {
            let c: f64 = (0..d).map(|l| self.mixing[l * d + k] * w[l]).sum();
            if c != 0.0 {
                let c2 = c * c;
                acc = convolve_even(&acc, &[1.0, c2 * base[1], c2 * c2 * base[2], c2 * c2 * c2 * base[3]]);
            }
        }
        let n = &self.noise;
        acc = convolve_even(&acc, &[1.0, moment(n, 2.0), moment(n, 4.0), moment(n, 6.0)]);
        acc[3]
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise.variance().unwrap_or(f64::INFINITY)
    }
}

fn moment(law: &NoiseLaw, p: f64) -> f64 {
    law.abs_moment_real(p).unwrap_or(f64::INFINITY)
}

/// Even moments (orders 0, 2, 4, 6) of a sum of independent symmetric variables.
fn convolve_even(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    const BINOM: [[f64; 4]; 4] = [[1.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0], [1.0, 6.0, 1.0, 0.0], [1.0, 15.0, 15.0, 1.0]];
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = (0..=k).map(|j| BINOM[k][j] * a[j] * b[k - j]).sum();
    }
    out
}

fn control_lineage() -> SeedLineage {
    SeedLineage::new(0x00c0_47a1, 0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn cholesky(s: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    let scale = (0..d).map(|k| s[k * d + k]).fold(0.0, f64::max).max(1e-300);
    for i in 0..d {
        for j in 0..=i {
            let mut v = s[i * d + j];
            for k in 0..j {
                v -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if v <= 1e-12 * scale {
                    return None;
                }
                l[i * d + i] = v.sqrt();
            } else {
                l[i * d + j] = v / l[j * d + j];
            }
        }
    }
    Some(l)
}

#[derive(Debug, Clone)]
pub struct RegressionDataset {
    pub spec: Arc<DesignSpec>,
    /// Row-major N×d design.
    pub rows: Vec<f64>,
    pub y: Vec<f64>,
    pub lineage: SeedLineage,
}

impl RegressionDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.rows[j * d..(j + 1) * d]
    }
}

pub fn generate_design(spec: &Arc<DesignSpec>, n: usize, lineage: SeedLineage) -> Result<RegressionDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let d = spec.dim;
    let mut rng = lineage.rng();
    let mut rows = vec![0.0; n * d];
    let mut y = Vec::with_capacity(n);
    let mut z = vec![0.0; d];
    for row in rows.chunks_exact_mut(d) {
        spec.draw_row(&mut rng, &mut z, row);
        y.push(dot(&spec.x_true, row) + spec.noise.sample(&mut rng));
    }
    Ok(RegressionDataset { spec: spec.clone(), rows, y, lineage })
}

/// Empirical mean of |𝐱[ℓ]|^q per coordinate.
pub fn empirical_abs_moments(rows: &[f64], dim: usize, q: f64) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for row in rows.chunks_exact(dim) {
        for (a, r) in acc.iter_mut().zip(row) {
            *a += r.abs().powf(q);
        }
        n += 1;
    }
    acc.iter().map(|a| a / n.max(1) as f64).collect()
}

/// Diagonal of D̂_q: (P̂|𝐱[ℓ]|^q)^{1/q}.
pub fn diag_matrices(rows: &[f64], dim: usize, q: u32) -> Result<Vec<f64>> {
    if !(q == 2 || q == 3) {
        return Err(invalid(format!("diagonal weights use q in {{2, 3}}, got {q}")));
    }
    if rows.is_empty() || rows.len() % dim != 0 {
        return Err(Error::Dimension { expected: dim, got: rows.len() });
    }
    moments_to_diag(&empirical_abs_moments(rows, dim, q as f64), q)
}

/// Diagonal of D_q from population moments.
pub fn population_diag(spec: &DesignSpec, q: u32) -> Result<Vec<f64>> {
    if !(q == 2 || q == 3) {
        return Err(invalid(format!("diagonal weights use q in {{2, 3}}, got {q}")));
    }
    moments_to_diag(&spec.abs_moments(q as f64), q)
}

fn moments_to_diag(m: &[f64], q: u32) -> Result<Vec<f64>> {
    if let Some(l) = m.iter().position(|v| !(*v > 0.0)) {
        return Err(invalid(format!("coordinate {l} has a zero diagonal weight")));
    }
    Ok(m.iter().map(|v| v.powf(1.0 / q as f64)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallBall {
    pub p_hat: f64,
    pub directions_used: usize,
    pub skipped: usize,
}

/// min over sampled unit v of the fraction of draws with |⟨v,𝐱⟩| > u·√⟨v,Σv⟩.
pub fn small_ball_estimate(spec: &DesignSpec, u: f64, directions: usize, draws: usize, lineage: SeedLineage) -> Result<SmallBall> {
    if !(u > 0.0) {
        return Err(invalid("small-ball level u must be positive"));
    }
    spec.validate()?;
    let d = spec.dim;
    let mut rng = lineage.rng();
    let mut rows = vec![0.0; draws * d];
    let mut z = vec![0.0; d];
    for row in rows.chunks_exact_mut(d) {
        spec.draw_row(&mut rng, &mut z, row);
    }
    let sigma = QuadraticModel { dim: d, sigma: spec.covariance(), b: vec![0.0; d], c: 0.0 };
    let mut p_hat = 1.0f64;
    let (mut used, mut skipped) = (0, 0);
    for _ in 0..directions.max(1) {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let s = sigma.quad_form(&v).sqrt();
        if !(s > 1e-12) {
            skipped += 1;
            continue;
        }
        let hits = rows.chunks_exact(d).filter(|r| dot(&v, r).abs() > u * s).count();
        p_hat = p_hat.min(hits as f64 / draws as f64);
        used += 1;
    }
    Ok(SmallBall { p_hat, directions_used: used, skipped })
}

/// Population side of the problem: Σ, D₃ and the closed-form risk.
#[derive(Debug, Clone)]
pub struct Population {
    pub spec: Arc<DesignSpec>,
    /// f(x) = ⟨x,Σx⟩ − 2⟨Σx_true, x⟩ + ⟨x_true,Σx_true⟩ + Var(noise).
    pub model: QuadraticModel,
    pub m3: Vec<f64>,
    pub d3: Vec<f64>,
}

impl Population {
    pub fn new(spec: Arc<DesignSpec>) -> Result<Self> {
        spec.validate()?;
        let d = spec.dim;
        let sigma = spec.covariance();
        let mut model = QuadraticModel { dim: d, sigma, b: vec![0.0; d], c: 0.0 };
        model.b = model.sigma_apply(&spec.x_true);
        model.c = dot(&model.b, &spec.x_true) + spec.noise_variance();
        let m3 = spec.abs_moments(3.0);
        let d3 = moments_to_diag(&m3, 3)?;
        Ok(Self { spec, model, m3, d3 })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// f(x) from the residual form (x − x_true)ᵀΣ(x − x_true) + Var(noise).
    pub fn risk(&self, x: &[f64]) -> f64 {
        let h = sub(x, &self.spec.x_true);
        self.model.quad_form(&h) + self.spec.noise_variance()
    }
}

/// α = C₀√(ln(d/δ)/N).
pub fn alpha(c0: f64, dim: usize, delta: f64, n: usize) -> f64 {
    c0 * (log_term(dim, delta) / n as f64).sqrt()
}

pub fn log_term(dim: usize, delta: f64) -> f64 {
    (dim as f64 / delta).ln()
}

/// Smallest N allowed by the moment order: (1/δ)^{1/((q/6)−1)}.
pub fn min_sample_size(delta: f64, q: u32) -> f64 {
    let p = q as f64 / 6.0;
    if p <= 1.0 {
        return f64::INFINITY;
    }
    (1.0 / delta).powf(1.0 / (p - 1.0))
}

#[derive(Debug, Clone)]
pub struct LassoInstance {
    pub pop: Arc<Population>,
    pub r: f64,
    pub delta: f64,
    pub n: usize,
    pub c0: f64,
    pub alpha: f64,
    pub xstar: Vec<f64>,
    pub xstar_gap: f64,
    /// Pε𝐱 = Σ(x_true − x*).
    pub grad_pop: Vec<f64>,
    /// Pε⁶.
    pub eps6_pop: f64,
}

impl LassoInstance {
    pub fn new(pop: Arc<Population>, r: f64, delta: f64, n: usize, c0: f64) -> Result<Self> {
        if !(r > 0.0 && delta > 0.0 && delta < 1.0 && c0 >= 0.0 && n > 0) {
            return Err(invalid("lasso instance needs R > 0, δ ∈ (0,1), C₀ ≥ 0, N > 0"));
        }
        let a = alpha(c0, pop.dim(), delta, n);
        let (xstar, gap) = solve_xstar(&pop, (1.0 + a) * r)?;
        let w = sub(&pop.spec.x_true, &xstar);
        let grad_pop = pop.model.sigma_apply(&w);
        let eps6_pop = pop.spec.sixth_moment(&w);
        Ok(Self { pop, r, delta, n, c0, alpha: a, xstar, xstar_gap: gap, grad_pop, eps6_pop })
    }

    pub fn dim(&self) -> usize {
        self.pop.dim()
    }

    pub fn alpha_valid(&self) -> bool {
        self.alpha <= 0.5
    }

    /// f(x) − f(x*) = ⟨h,Σh⟩ − 2⟨Pε𝐱, h⟩ with h = x − x*.
    pub fn excess_risk(&self, x: &[f64]) -> f64 {
        let h = sub(x, &self.xstar);
        self.pop.model.quad_form(&h) - 2.0 * dot(&self.grad_pop, &h)
    }

    pub fn ystar(&self) -> Vec<f64> {
        let s = (1.0 - self.alpha) / (1.0 + self.alpha);
        self.xstar.iter().map(|v| s * v).collect()
    }
}

/// x* = argmin f over the D₃-ball of the given radius.
pub fn solve_xstar(pop: &Population, radius: f64) -> Result<(Vec<f64>, f64)> {
    let r = solve_quadratic_l1(&pop.model, &pop.d3, radius, XSTAR_TOL, 2_000_000);
    if !r.converged {
        return Err(invalid(format!("population solution stalled at gap {:.3e}", r.certificate)));
    }
    Ok((r.x, r.certificate.max(0.0)))
}

/// Empirical counterparts needed by the events.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub model: QuadraticModel,
    pub m3: Vec<f64>,
    pub d3: Vec<f64>,
    /// P̂ε𝐱 = b̂ − Σ̂x*.
    pub grad: Vec<f64>,
    /// P̂ε⁶.
    pub eps6: f64,
}

impl EmpiricalMoments {
    pub fn from_data(inst: &LassoInstance, data: &RegressionDataset) -> Result<Self> {
        let d = data.dim();
        let model = QuadraticModel::least_squares(&data.rows, &data.y, d);
        let m3 = empirical_abs_moments(&data.rows, d, 3.0);
        let d3 = moments_to_diag(&m3, 3)?;
        let grad = sub(&model.b, &model.sigma_apply(&inst.xstar));
        let eps6 = (0..data.len()).map(|j| (data.y[j] - dot(&inst.xstar, data.row(j))).powi(6)).sum::<f64>() / data.len() as f64;
        Ok(Self { model, m3, d3, grad, eps6 })
    }

    /// P̂ replaced by P.
    pub fn population_surrogate(inst: &LassoInstance) -> Self {
        Self {
            model: inst.pop.model.clone(),
            m3: inst.pop.m3.clone(),
            d3: inst.pop.d3.clone(),
            grad: inst.grad_pop.clone(),
            eps6: inst.eps6_pop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventConstants {
    pub c2: f64,
    pub c3: f64,
    pub phi: f64,
}

/// Event verdicts, worst margins, and the constants each event would need.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventReport {
    pub norm_ok: bool,
    pub diag_ok: bool,
    pub grad_ok: bool,
    pub quad_ok: bool,
    pub norm_margin: f64,
    pub diag_margin: f64,
    pub grad_margin: f64,
    pub quad_margin: f64,
    pub grad_required: f64,
    pub quad_required: f64,
    pub quad_probes: usize,
}

impl EventReport {
    pub fn all(&self) -> bool {
        self.norm_ok && self.diag_ok && self.grad_ok && self.quad_ok
    }
}

/// Norm/Diag/Grad/Quad. Quad is probed at the boundary of ‖D̂₃h‖₁ ≤ 5R over
/// every s-sparse sign pattern (s ≤ 3), `budget` Gaussian directions, and
/// any `extra` directions.
pub fn event_indicators(
    inst: &LassoInstance,
    emp: &EmpiricalMoments,
    constants: &EventConstants,
    budget: usize,
    lineage: SeedLineage,
    extra: &[Vec<f64>],
) -> EventReport {
    let d = inst.dim();
    let a = inst.alpha;
    let r = inst.r;
    let kappa = log_term(d, inst.delta) / inst.n as f64;

    let norm_margin = (1.0 + a).powi(2) * r - weighted_l1(&inst.xstar, &emp.d3);
    let shrink = (1.0 + a).powi(-3);
    let diag_margin = emp.m3.iter().zip(&inst.pop.m3).map(|(e, p)| e - shrink * p).fold(f64::INFINITY, f64::min);

    let dev = emp
        .grad
        .iter()
        .zip(&inst.grad_pop)
        .zip(&emp.d3)
        .map(|((e, p), w)| ((p - e) / w).abs())
        .fold(0.0, f64::max);
    let scale = kappa.sqrt() * (inst.eps6_pop + emp.eps6).powf(1.0 / 6.0);
    let grad_required = if scale > 0.0 { dev / scale } else if dev > 0.0 { f64::INFINITY } else { 0.0 };
    let grad_margin = constants.c2 * scale - dev;

    // At ‖D̂₃v‖₁ = 5R the Quad slack is ⟨v,Σ̂v⟩ − φ⟨v,Σv⟩ + 5·C₃·κ·R.
    let radius = 5.0 * r;
    let lin = constants.c3 * kappa * radius;
    let mut worst_gap = f64::INFINITY;
    let mut probes = 0usize;
    let (ps, ss) = (&inst.pop.model.sigma, &emp.model.sigma);
    for (i, j, k) in sparse_supports(d) {
        let support: Vec<usize> = [Some(i), j, k].into_iter().flatten().collect();
        for signs in 0..(1usize << (support.len() - 1)) {
            let coef: Vec<f64> = (0..support.len()).map(|t| if t > 0 && signs >> (t - 1) & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let (mut qe, mut qp, mut n1) = (0.0, 0.0, 0.0);
            for (t, &u) in support.iter().enumerate() {
                n1 += emp.d3[u] * coef[t].abs();
                for (s, &w) in support.iter().enumerate() {
                    qe += coef[t] * coef[s] * ss[u * d + w];
                    qp += coef[t] * coef[s] * ps[u * d + w];
                }
            }
            let s = radius / n1;
            worst_gap = worst_gap.min(s * s * (qe - constants.phi * qp));
            probes += 1;
        }
    }
    let mut probe = |v: &[f64], worst: &mut f64| {
        let n1 = weighted_l1(v, &emp.d3);
        if n1 > 0.0 {
            let s = radius / n1;
            let gap = s * s * (emp.model.quad_form(v) - constants.phi * inst.pop.model.quad_form(v));
            *worst = worst.min(gap);
            probes += 1;
        }
    };
    let mut rng = lineage.rng();
    for _ in 0..budget {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        probe(&v, &mut worst_gap);
    }
    for v in extra {
        probe(v, &mut worst_gap);
    }
    let quad_margin = worst_gap.min(0.0) + lin;
    let quad_required = if kappa > 0.0 { (-worst_gap).max(0.0) / (kappa * radius) } else { 0.0 };

    EventReport {
        norm_ok: norm_margin >= 0.0,
        diag_ok: diag_margin >= 0.0,
        grad_ok: grad_margin >= 0.0,
        quad_ok: quad_margin >= 0.0,
        norm_margin,
        diag_margin,
        grad_margin,
        quad_margin,
        grad_required,
        quad_required,
        quad_probes: probes,
    }
}

/// Supports of size 1, 2 and 3 as (i, Some(j), Some(k)) with i < j < k.
fn sparse_supports(d: usize) -> impl Iterator<Item = (usize, Option<usize>, Option<usize>)> {
    (0..d).flat_map(move |i| {
        std::iter::once((i, None, None))
            .chain((i + 1..d).map(move |j| (i, Some(j), None)))
            .chain((i + 1..d).flat_map(move |j| (j + 1..d).map(move |k| (i, Some(j), Some(k)))))
    })
}

/// The identity form of f(x̂) − f(x*).
pub fn excess_risk(inst: &LassoInstance, xhat: &[f64]) -> f64 {
    inst.excess_risk(xhat)
}

/// Samplewise checks of the KKT identities, the moment inequalities and the
/// y* construction. Returns (checks, violations).
pub fn lemma_checks(inst: &LassoInstance, emp: &EmpiricalMoments, norm_ok: bool, points: &[Vec<f64>]) -> (usize, usize) {
    let mut checks = 0;
    let mut bad = 0;
    let mut check = |ok: bool| {
        checks += 1;
        if !ok {
            bad += 1;
        }
    };
    let pop = &inst.pop;
    let fstar = pop.risk(&inst.xstar);
    let fhat_star = emp.model.value(&inst.xstar);
    let eps6_root = inst.eps6_pop.powf(1.0 / 6.0);
    let radius = (1.0 + inst.alpha) * inst.r;
    let kkt_tol = 0.5 * inst.xstar_gap + 1e-12 * (1.0 + fstar.abs());
    for x in points {
        let h = sub(x, &inst.xstar);
        let direct = pop.risk(x) - fstar;
        let ident = inst.excess_risk(x);
        check((direct - ident).abs() <= 1e-9 * (1.0 + direct.abs()));
        let direct_hat = emp.model.value(x) - fhat_star;
        let ident_hat = emp.model.quad_form(&h) - 2.0 * dot(&emp.grad, &h);
        check((direct_hat - ident_hat).abs() <= 1e-9 * (1.0 + direct_hat.abs()));
        if weighted_l1(x, &pop.d3) <= radius {
            check(dot(&inst.grad_pop, &h) <= kkt_tol);
            check(pop.model.quad_form(&h) <= direct + 2.0 * kkt_tol);
        }
        let n3 = weighted_l1(x, &pop.d3);
        let n3_hat = weighted_l1(x, &emp.d3);
        check(pop.model.quad_form(x) <= n3 * n3 * (1.0 + 1e-12));
        check(emp.model.quad_form(x) <= n3_hat * n3_hat * (1.0 + 1e-12));
        check(dot(&inst.grad_pop, x) <= eps6_root * n3 * (1.0 + 1e-12) + 1e-15);
    }
    let dy = sub(&inst.ystar(), &inst.xstar);
    let ar = inst.alpha * inst.r;
    check(weighted_l1(&dy, &pop.d3) <= 2.0 * ar * (1.0 + 1e-12));
    if norm_ok {
        check(weighted_l1(&dy, &emp.d3) <= 3.0 * ar * (1.0 + 1e-12));
    }
    (checks, bad)
}

/// Random points: half uniform-radius in the (1+α)R D₃-ball, half outside it.
pub fn probe_points(inst: &LassoInstance, count: usize, lineage: SeedLineage) -> Vec<Vec<f64>> {
    let d = inst.dim();
    let mut rng = lineage.rng();
    let radius = (1.0 + inst.alpha) * inst.r;
    (0..count)
        .map(|k| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = weighted_l1(&v, &inst.pop.d3);
            let u: f64 = rng.random();
            let target = if k % 2 == 0 { radius * u } else { radius * (1.0 + 3.0 * u) };
            v.iter().map(|x| x * target / n).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersistenceConfig {
    pub dim: usize,
    pub dof: f64,
    pub q: u32,
    pub noise_dof: f64,
    pub noise_scale: f64,
    pub r: f64,
    /// ‖D₃x_true‖₁ / R; above one the constraint is active.
    pub signal_ratio: f64,
    pub sparsity: usize,
    pub delta: f64,
    pub n_schedule: Vec<usize>,
    pub trials: usize,
    pub pilot_trials: usize,
    pub quad_directions: usize,
    pub lemma_points: usize,
    pub solver_tol: f64,
    pub solver_budget: usize,
    pub small_ball_u: f64,
    pub seed: u64,
}

impl Default for PersistenceConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            dof: 12.0,
            q: 9,
            noise_dof: 12.0,
            noise_scale: 1.0,
            r: 1.0,
            signal_ratio: 2.0,
            sparsity: 5,
            delta: 0.1,
            n_schedule: vec![500, 2000, 8000],
            trials: 400,
            pilot_trials: 200,
            quad_directions: 64,
            lemma_points: 8,
            solver_tol: 1e-9,
            solver_budget: 200_000,
            small_ball_u: 1.0,
            seed: 2024,
        }
    }
}

impl PersistenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q < 9 {
            return Err(invalid(format!("persistence needs q ≥ 9, got {}", self.q)));
        }
        if !(self.dof > self.q as f64) {
            return Err(invalid(format!("design dof {} must exceed q = {}", self.dof, self.q)));
        }
        if !(self.noise_dof > 6.0) {
            return Err(invalid("noise needs a finite sixth moment (dof > 6)"));
        }
        if self.n_schedule.is_empty() || self.n_schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("N schedule must be nonempty and strictly increasing"));
        }
        if self.trials == 0 || self.pilot_trials == 0 {
            return Err(invalid("trial counts must be positive"));
        }
        if !(self.sparsity >= 1 && self.sparsity <= self.dim) {
            return Err(invalid("sparsity must lie in [1, d]"));
        }
        if !(self.r > 0.0 && self.signal_ratio > 0.0 && self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("R, signal ratio must be positive and δ ∈ (0,1)"));
        }
        Ok(())
    }

    /// Diagonal mixing with scales 1, 1.5, 2 repeating; x_true alternates in
    /// sign with 1/(k+1) decay on the first `sparsity` coordinates.
    pub fn design(&self) -> Result<DesignSpec> {
        self.validate()?;
        let d = self.dim;
        let tail = DesignTail::StudentT { dof: self.dof };
        let mut spec = DesignSpec::identity(d, tail, NoiseLaw::StudentT { dof: self.noise_dof, scale: self.noise_scale }, vec![0.0; d], self.q);
        for l in 0..d {
            spec.mixing[l * d + l] = 1.0 + 0.5 * (l % 3) as f64;
        }
        let mut xt: Vec<f64> = (0..d)
            .map(|k| if k < self.sparsity { (if k % 2 == 0 { 1.0 } else { -1.0 }) / (k + 1) as f64 } else { 0.0 })
            .collect();
        let d3 = population_diag(&spec, 3)?;
        let s = self.signal_ratio * self.r / weighted_l1(&xt, &d3);
        xt.iter_mut().for_each(|v| *v *= s);
        spec.x_true = xt;
        Ok(spec)
    }

    fn allowed_failures(&self) -> usize {
        (self.delta / 8.0 * self.pilot_trials as f64).floor() as usize
    }

    fn trial_lineage(&self, n_index: usize, k: usize) -> SeedLineage {
        SeedLineage::new(self.seed, ((n_index as u64) << 32) | k as u64)
    }

    fn pilot_lineage(&self, n_index: usize, k: usize) -> SeedLineage {
        SeedLineage::new(splitmix64(self.seed ^ 0x9170_7000), ((n_index as u64) << 32) | k as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub c0: f64,
    pub c2: f64,
    pub c3: f64,
    pub phi: f64,
    pub small_ball: SmallBall,
    pub pilot_trials: usize,
    pub allowed_failures: usize,
    /// Pilot failures per N at the chosen constants: [norm, diag, grad, quad].
    pub pilot_failures: Vec<[usize; 4]>,
}

impl Calibration {
    pub fn constants(&self) -> EventConstants {
        EventConstants { c2: self.c2, c3: self.c3, phi: self.phi }
    }
}

/// The (k+1)-th largest value: the smallest threshold leaving at most k
/// values strictly above it.
fn order_threshold(mut v: Vec<f64>, k: usize) -> f64 {
    v.sort_by(|a, b| b.total_cmp(a));
    v.get(k).copied().unwrap_or(0.0).max(0.0)
}

/// Sets C₀, C₂, C₃ and φ from pilot trials: φ = 1 ∧ (u²p̂/2) from the
/// small-ball estimate, then each constant is the smallest value with at most
/// ⌊δ/8 · pilot⌋ pilot failures at every N.
pub fn calibrate(cfg: &PersistenceConfig, pop: &Arc<Population>) -> Result<Calibration> {
    cfg.validate()?;
    let d = cfg.dim;
    let k = cfg.allowed_failures();
    let small_ball = small_ball_estimate(&pop.spec, cfg.small_ball_u, 64, 20_000, SeedLineage::new(splitmix64(cfg.seed ^ 0x5b), 0))?;
    let phi = (cfg.small_ball_u * cfg.small_ball_u * small_ball.p_hat / 2.0).min(1.0);

    let pilot_m3: Vec<Vec<Vec<f64>>> = cfg
        .n_schedule
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            map_indexed(cfg.pilot_trials, |t| {
                let data = generate_design(&pop.spec, n, cfg.pilot_lineage(i, t))?;
                Ok(empirical_abs_moments(&data.rows, d, 3.0))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    // C₀ on a geometric grid; α must stay ≤ 1/2 at the smallest N.
    let c0_max = 0.5 / (log_term(d, cfg.delta) / cfg.n_schedule[0] as f64).sqrt();
    let mut c0 = None;
    let mut candidate = 0.02;
    while candidate <= c0_max {
        let mut ok = true;
        for (i, &n) in cfg.n_schedule.iter().enumerate() {
            let inst = LassoInstance::new(pop.clone(), cfg.r, cfg.delta, n, candidate)?;
            let (nf, df) = norm_diag_failures(&inst, &pilot_m3[i]);
            if nf > k || df > k {
                ok = false;
                break;
            }
        }
        if ok {
            c0 = Some(candidate);
            break;
        }
        candidate *= 1.05;
    }
    let c0 = c0.ok_or_else(|| invalid("no C₀ with α ≤ 1/2 meets the pilot failure budget"))?;

    let instances: Vec<LassoInstance> =
        cfg.n_schedule.iter().map(|&n| LassoInstance::new(pop.clone(), cfg.r, cfg.delta, n, c0)).collect::<Result<_>>()?;
    let probe = EventConstants { c2: 0.0, c3: 0.0, phi };
    let required: Vec<Vec<(f64, f64)>> = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            map_indexed(cfg.pilot_trials, |t| {
                let lineage = cfg.pilot_lineage(i, t);
                let data = generate_design(&pop.spec, inst.n, lineage)?;
                let emp = EmpiricalMoments::from_data(inst, &data)?;
                let ev = event_indicators(inst, &emp, &probe, cfg.quad_directions, lineage.child(1), &[]);
                Ok((ev.grad_required, ev.quad_required))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let c2 = required.iter().map(|r| order_threshold(r.iter().map(|p| p.0).collect(), k)).fold(0.0, f64::max);
    let c3 = required.iter().map(|r| order_threshold(r.iter().map(|p| p.1).collect(), k)).fold(0.0, f64::max);

    let pilot_failures = instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let (nf, df) = norm_diag_failures(inst, &pilot_m3[i]);
            let gf = required[i].iter().filter(|p| p.0 > c2).count();
            let qf = required[i].iter().filter(|p| p.1 > c3).count();
            [nf, df, gf, qf]
        })
        .collect();
    Ok(Calibration { c0, c2, c3, phi, small_ball, pilot_trials: cfg.pilot_trials, allowed_failures: k, pilot_failures })
}

fn norm_diag_failures(inst: &LassoInstance, m3s: &[Vec<f64>]) -> (usize, usize) {
    let a = inst.alpha;
    let shrink = (1.0 + a).powi(-3);
    let mut nf = 0;
    let mut df = 0;
    for m3 in m3s {
        let d3: Vec<f64> = m3.iter().map(|v| v.cbrt()).collect();
        if weighted_l1(&inst.xstar, &d3) > (1.0 + a).powi(2) * inst.r {
            nf += 1;
        }
        if m3.iter().zip(&inst.pop.m3).any(|(e, p)| *e < shrink * p) {
            df += 1;
        }
    }
    (nf, df)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoTrial {
    pub trial: usize,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R")]
    pub r: f64,
    pub delta: f64,
    pub alpha: f64,
    pub norm_ok: bool,
    pub diag_ok: bool,
    pub grad_ok: bool,
    pub quad_ok: bool,
    pub feasible_ok: bool,
    pub excess_risk: f64,
    pub bound_shape: f64,
    pub solver_iters: usize,
    pub converged: bool,
    pub lemma_checks: usize,
    pub lemma_violations: usize,
}

/// One trial: data, x̂ on the D̂₃-ball of radius R, events and checks.
pub fn run_trial(cfg: &PersistenceConfig, inst: &LassoInstance, constants: &EventConstants, trial: usize, lineage: SeedLineage) -> Result<LassoTrial> {
    let d = inst.dim();
    let data = generate_design(&inst.pop.spec, inst.n, lineage)?;
    let emp = EmpiricalMoments::from_data(inst, &data)?;
    let sol = solve_lasso(&data.rows, &data.y, d, &emp.d3, inst.r, cfg.solver_tol, cfg.solver_budget);
    let h = sub(&sol.x, &inst.xstar);
    let events = event_indicators(inst, &emp, constants, cfg.quad_directions, lineage.child(1), std::slice::from_ref(&h));
    let feasible_ok = weighted_l1(&sol.x, &inst.pop.d3) <= (1.0 + inst.alpha) * inst.r;
    let kappa = log_term(d, inst.delta) / inst.n as f64;
    let bound_shape = (inst.eps6_pop + emp.eps6).powf(1.0 / 6.0) * inst.r * kappa.sqrt() + inst.r * inst.r * kappa;
    let mut points = probe_points(inst, cfg.lemma_points, lineage.child(2));
    points.push(sol.x.clone());
    let (lemma_checks, lemma_violations) = lemma_checks(inst, &emp, events.norm_ok, &points);
    Ok(LassoTrial {
        trial,
        d,
        n: inst.n,
        r: inst.r,
        delta: inst.delta,
        alpha: inst.alpha,
        norm_ok: events.norm_ok,
        diag_ok: events.diag_ok,
        grad_ok: events.grad_ok,
        quad_ok: events.quad_ok,
        feasible_ok,
        excess_risk: inst.excess_risk(&sol.x),
        bound_shape,
        solver_iters: sol.iterations,
        converged: sol.converged,
        lemma_checks,
        lemma_violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistenceRow {
    pub n: usize,
    pub alpha: f64,
    pub alpha_valid: bool,
    pub sample_size_ok: bool,
    pub trials: usize,
    pub nonconverged: usize,
    /// Feasibility failures among converged trials.
    pub feasibility: Wilson,
    /// Failure counts [norm, diag, grad, quad].
    pub event_failures: [usize; 4],
    pub median_excess_risk: f64,
    pub median_ratio: f64,
    pub lemma_checks: usize,
    pub lemma_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistenceReport {
    pub calibration: Calibration,
    pub min_sample_size: f64,
    pub rows: Vec<PersistenceRow>,
    pub slope: f64,
    pub trials: Vec<LassoTrial>,
}

pub fn persistence_experiment(cfg: &PersistenceConfig) -> Result<PersistenceReport> {
    let spec = Arc::new(cfg.design()?);
    let pop = Arc::new(Population::new(spec)?);
    let calibration = calibrate(cfg, &pop)?;
    let constants = calibration.constants();
    let min_n = min_sample_size(cfg.delta, cfg.q);
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for (i, &n) in cfg.n_schedule.iter().enumerate() {
        let inst = LassoInstance::new(pop.clone(), cfg.r, cfg.delta, n, calibration.c0)?;
        let batch: Vec<LassoTrial> = map_indexed(cfg.trials, |k| run_trial(cfg, &inst, &constants, trials_offset(i, cfg.trials) + k, cfg.trial_lineage(i, k)))
            .into_iter()
            .collect::<Result<_>>()?;
        rows.push(summarize(&inst, n as f64 >= min_n, &batch));
        trials.extend(batch);
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let meds: Vec<f64> = rows.iter().map(|r| r.median_excess_risk).collect();
    let slope = if rows.len() >= 2 && meds.iter().all(|m| *m > 0.0) { loglog_slope(&ns, &meds) } else { f64::NAN };
    Ok(PersistenceReport { calibration, min_sample_size: min_n, rows, slope, trials })
}

fn trials_offset(n_index: usize, per_n: usize) -> usize {
    n_index * per_n
}

pub fn summarize(inst: &LassoInstance, sample_size_ok: bool, batch: &[LassoTrial]) -> PersistenceRow {
    let conv: Vec<&LassoTrial> = batch.iter().filter(|t| t.converged).collect();
    let fails = conv.iter().filter(|t| !t.feasible_ok).count();
    let risks: Vec<f64> = conv.iter().map(|t| t.excess_risk).collect();
    let ratios: Vec<f64> = conv.iter().map(|t| t.excess_risk / t.bound_shape).collect();
    let count = |f: fn(&LassoTrial) -> bool| batch.iter().filter(|t| !f(t)).count();
    PersistenceRow {
        n: inst.n,
        alpha: inst.alpha,
        alpha_valid: inst.alpha_valid(),
        sample_size_ok,
        trials: batch.len(),
        nonconverged: batch.len() - conv.len(),
        feasibility: Wilson::new(fails, conv.len().max(1)),
        event_failures: [count(|t| t.norm_ok), count(|t| t.diag_ok), count(|t| t.grad_ok), count(|t| t.quad_ok)],
        median_excess_risk: if risks.is_empty() { f64::NAN } else { median(&risks) },
        median_ratio: if ratios.is_empty() { f64::NAN } else { median(&ratios) },
        lemma_checks: batch.iter().map(|t| t.lemma_checks).sum(),
        lemma_violations: batch.iter().map(|t| t.lemma_violations).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn spec(d: usize, dof: f64) -> Arc<DesignSpec> {
        let mut xt = vec![0.0; d];
        xt[0] = 1.0;
        Arc::new(DesignSpec::identity(d, DesignTail::StudentT { dof }, NoiseLaw::StudentT { dof: 12.0, scale: 0.5 }, xt, 9))
    }

    fn dense_spec() -> Arc<DesignSpec> {
        let mixing = vec![1.0, 0.3, 0.0, 0.2, 1.2, -0.4, 0.0, 0.5, 0.8];
        Arc::new(DesignSpec {
            dim: 3,
            tail: DesignTail::StudentT { dof: 12.0 },
            mixing,
            noise: NoiseLaw::StudentT { dof: 12.0, scale: 0.7 },
            x_true: vec![0.8, -0.5, 0.3],
            q: 9,
        })
    }

    #[test]
    fn dof_must_exceed_q() {
        assert!(generate_design(&spec(2, 12.0), 10, SeedLineage::new(1, 0)).is_ok());
        assert!(generate_design(&spec(2, 8.0), 10, SeedLineage::new(1, 0)).is_err());
    }

    #[test]
    fn rank_deficient_mixing_rejected() {
        let mut s = (*dense_spec()).clone();
        s.mixing = vec![1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn generation_is_reproducible() {
        let a = generate_design(&dense_spec(), 50, SeedLineage::new(9, 2)).unwrap();
        let b = generate_design(&dense_spec(), 50, SeedLineage::new(9, 2)).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn ninth_moment_matches_on_control_draws() {
        let s = spec(1, 12.0);
        let data = generate_design(&s, 100_000, SeedLineage::new(3, 0)).unwrap();
        let est = empirical_abs_moments(&data.rows, 1, 9.0)[0];
        let exact = s.tail.law().abs_moment(9).unwrap();
        assert!(est.is_finite() && est > exact / 3.0 && est < exact * 3.0, "{est} vs {exact}");
        let est3 = empirical_abs_moments(&data.rows, 1, 3.0)[0];
        let exact3 = s.tail.law().abs_moment(3).unwrap();
        assert!((est3 / exact3 - 1.0).abs() < 0.03);
    }

    #[test]
    fn diag_examples() {
        assert_eq!(diag_matrices(&[1.0, 2.0], 2, 3).unwrap(), vec![1.0, 2.0]);
        assert!((diag_matrices(&[1.0, 5.0, -1.0, 5.0], 2, 3).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!(diag_matrices(&[1.0, 0.0, -1.0, 0.0], 2, 3).is_err());
        assert!(diag_matrices(&[1.0, 2.0], 2, 4).is_err());
        let data = generate_design(&dense_spec(), 200, SeedLineage::new(4, 0)).unwrap();
        let d2 = diag_matrices(&data.rows, 3, 2).unwrap();
        let m = QuadraticModel::least_squares(&data.rows, &data.y, 3);
        for l in 0..3 {
            assert!((d2[l] * d2[l] - m.sigma[l * 3 + l]).abs() < 1e-12 * m.sigma[l * 3 + l]);
        }
    }

    #[test]
    fn small_ball_student_t_matches_tail() {
        let s = spec(1, 12.0);
        let sb = small_ball_estimate(&s, 1.0, 4, 200_000, SeedLineage::new(5, 0)).unwrap();
        // Standardized t(12) exceeds 1 iff |T| > √(12/10).
        let t = StudentsT::new(0.0, 1.0, 12.0).unwrap();
        let exact = 2.0 * (1.0 - t.cdf((1.2f64).sqrt()));
        assert!((sb.p_hat - exact).abs() < 0.005, "{} vs {exact}", sb.p_hat);
    }

    #[test]
    fn small_ball_gaussian_and_limits() {
        let mut s = (*spec(3, 12.0)).clone();
        s.tail = DesignTail::Gaussian;
        let sb = small_ball_estimate(&s, 1.0, 8, 100_000, SeedLineage::new(6, 0)).unwrap();
        assert!((sb.p_hat - 0.3173).abs() < 0.01);
        assert!(small_ball_estimate(&s, 1e-9, 4, 2000, SeedLineage::new(6, 0)).unwrap().p_hat > 0.999);
        assert!(small_ball_estimate(&s, 20.0, 4, 2000, SeedLineage::new(6, 0)).unwrap().p_hat < 1e-3);
        assert!(small_ball_estimate(&s, 0.0, 4, 10, SeedLineage::new(6, 0)).is_err());
    }

    #[test]
    fn sixth_moment_matches_monte_carlo() {
        let s = dense_spec();
        let w = [0.4, -0.2, 0.5];
        let exact = s.sixth_moment(&w);
        let mut rng = SeedLineage::new(7, 0).rng();
        let (mut z, mut row) = (vec![0.0; 3], vec![0.0; 3]);
        let n = 400_000;
        let mut acc = 0.0;
        for _ in 0..n {
            s.draw_row(&mut rng, &mut z, &mut row);
            acc += (dot(&w, &row) + s.noise.sample(&mut rng)).powi(6);
        }
        let mc = acc / n as f64;
        assert!((mc / exact - 1.0).abs() < 0.1, "{mc} vs {exact}");
        // w = 0 leaves the noise alone.
        assert!((s.sixth_moment(&[0.0; 3]) - s.noise.abs_moment(6).unwrap()).abs() < 1e-12);
    }

    fn instance(c0: f64) -> LassoInstance {
        let cfg = PersistenceConfig { dim: 6, sparsity: 3, ..Default::default() };
        let pop = Arc::new(Population::new(Arc::new(cfg.design().unwrap())).unwrap());
        LassoInstance::new(pop, 1.0, 0.1, 500, c0).unwrap()
    }

    #[test]
    fn excess_risk_identity_and_sign() {
        let inst = instance(1.0);
        assert_eq!(inst.excess_risk(&inst.xstar), 0.0);
        let fstar = inst.pop.risk(&inst.xstar);
        for x in probe_points(&inst, 200, SeedLineage::new(8, 0)) {
            let direct = inst.pop.risk(&x) - fstar;
            assert!((direct - inst.excess_risk(&x)).abs() < 1e-9 * (1.0 + direct.abs()));
            let h = sub(&x, &inst.xstar);
            if weighted_l1(&x, &inst.pop.d3) <= (1.0 + inst.alpha) * inst.r {
                assert!(inst.excess_risk(&x) >= inst.pop.model.quad_form(&h) - 1e-9);
            }
        }
    }

    #[test]
    fn population_surrogate_events() {
        let inst = instance(1.0);
        let emp = EmpiricalMoments::population_surrogate(&inst);
        let ev = event_indicators(&inst, &emp, &EventConstants { c2: 0.0, c3: 0.0, phi: 0.5 }, 16, SeedLineage::new(1, 1), &[vec![0.0; 6]]);
        assert!(ev.norm_ok && ev.diag_ok && ev.grad_ok && ev.quad_ok);
        let want = (1.0 - (1.0 + inst.alpha).powi(-3)) * inst.pop.m3.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((ev.diag_margin - want).abs() < 1e-12);
        assert!(ev.grad_margin.abs() < 1e-12);
        assert_eq!(ev.quad_probes, 6 + 15 * 2 + 20 * 4 + 16);
    }

    #[test]
    fn lemma_inequalities_on_random_points() {
        let inst = instance(1.0);
        let data = generate_design(&inst.pop.spec, 300, SeedLineage::new(11, 0)).unwrap();
        let emp = EmpiricalMoments::from_data(&inst, &data).unwrap();
        let pts = probe_points(&inst, 10_000, SeedLineage::new(12, 0));
        let (checks, bad) = lemma_checks(&inst, &emp, true, &pts);
        assert!(checks > 50_000);
        assert_eq!(bad, 0);
    }

    #[test]
    fn ystar_distance_bound() {
        let inst = instance(2.0);
        let dy = sub(&inst.ystar(), &inst.xstar);
        assert!(weighted_l1(&dy, &inst.pop.d3) <= 2.0 * inst.alpha * inst.r + 1e-12);
    }

    #[test]
    fn noiseless_interior_recovers_truth() {
        let mut s = (*dense_spec()).clone();
        s.noise = NoiseLaw::Constant { value: 0.0 };
        s.x_true = vec![0.1, -0.05, 0.02];
        let s = Arc::new(s);
        let data = generate_design(&s, 400, SeedLineage::new(13, 0)).unwrap();
        let d3 = diag_matrices(&data.rows, 3, 3).unwrap();
        let sol = solve_lasso(&data.rows, &data.y, 3, &d3, 1.0, 1e-14, 100_000);
        assert!(sol.converged);
        for (a, b) in sol.x.iter().zip(&s.x_true) {
            assert!((a - b).abs() < 1e-6);
        }
        let pop = Arc::new(Population::new(s.clone()).unwrap());
        let inst = LassoInstance::new(pop, 1.0, 0.1, 400, 1.0).unwrap();
        assert!(inst.excess_risk(&sol.x).abs() < 1e-10);
        assert!(weighted_l1(&sol.x, &inst.pop.d3) <= (1.0 + inst.alpha) * inst.r);
    }

    #[test]
    fn sample_size_floor() {
        assert!((min_sample_size(0.1, 9) - 100.0).abs() < 1e-9);
        assert!(min_sample_size(0.1, 6).is_infinite());
    }

    #[test]
    fn small_experiment_is_deterministic() {
        let cfg = PersistenceConfig { dim: 5, sparsity: 2, n_schedule: vec![200, 800], trials: 20, pilot_trials: 40, ..Default::default() };
        let a = persistence_experiment(&cfg).unwrap();
        let b = persistence_experiment(&cfg).unwrap();
        assert_eq!(a.trials, b.trials);
        assert!(a.calibration.c0 > 0.0);
        assert!(a.rows.iter().all(|r| r.alpha_valid && r.lemma_violations == 0));
    }
}
