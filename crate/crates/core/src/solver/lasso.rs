//! Pairwise Frank–Wolfe for quadratics over a weighted ℓ1 ball.

use super::l1::best_vertex;
use super::SolveResult;

/// q(x) = ⟨x, Σx⟩ − 2⟨b, x⟩ + c with Σ stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub dim: usize,
    pub sigma: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl QuadraticModel {
    /// Empirical least squares (1/N)Σⱼ (yⱼ − ⟨xⱼ, x⟩)² from row-major design rows.
    pub fn least_squares(rows: &[f64], y: &[f64], dim: usize) -> Self {
        let n = y.len();
        let mut sigma = vec![0.0; dim * dim];
        let mut b = vec![0.0; dim];
        let mut c = 0.0;
        for (row, yj) in rows.chunks_exact(dim).zip(y) {
            for k in 0..dim {
                b[k] += row[k] * yj;
                for l in k..dim {
                    sigma[k * dim + l] += row[k] * row[l];
                }
            }
            c += yj * yj;
        }
        let nf = n as f64;
        for k in 0..dim {
            b[k] /= nf;
            for l in k..dim {
                sigma[k * dim + l] /= nf;
                sigma[l * dim + k] = sigma[k * dim + l];
            }
        }
        Self { dim, sigma, b, c: c / nf }
    }

    pub fn sigma_apply(&self, x: &[f64]) -> Vec<f64> {
        self.sigma.chunks_exact(self.dim).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.sigma_apply(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.quad_form(x) - 2.0 * self.b.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.c
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.sigma_apply(x).iter().zip(&self.b).map(|(s, b)| 2.0 * (s - b)).collect()
    }
}

/// Vertex k of the ball: coordinate k/2 with sign + for even k.
fn vertex_coord(k: usize, w: &[f64], radius: f64) -> (usize, f64) {
    let j = k / 2;
    let s = if k % 2 == 0 { 1.0 } else { -1.0 };
    (j, s * radius / w[j])
}

/// Minimizes a quadratic over {Σ wₗ|xₗ| ≤ R} by pairwise Frank–Wolfe with
/// exact line search; iterates stay convex combinations of vertices.
pub fn solve_quadratic_l1(model: &QuadraticModel, w: &[f64], radius: f64, tol: f64, budget: usize) -> SolveResult {
    let d = model.dim;
    let mut alpha = vec![0.0; 2 * d];
    alpha[0] = 0.5;
    alpha[1] = 0.5;
    let mut x = vec![0.0; d];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..budget {
        iterations = it;
        let g = model.gradient(&x);
        let gx: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
        let Some(j) = best_vertex(&g, w) else {
            gap = 0.0;
            break;
        };
        let fw = 2 * j + usize::from(g[j] > 0.0);
        let (fj, fv) = vertex_coord(fw, w, radius);
        gap = gx - g[fj] * fv;
        if gap <= tol {
            break;
        }
        // Away vertex: active vertex with the largest ⟨g, v⟩.
        let mut away = fw;
        let mut away_score = f64::NEG_INFINITY;
        for (k, a) in alpha.iter().enumerate() {
            if *a > 0.0 {
                let (vj, vv) = vertex_coord(k, w, radius);
                let s = g[vj] * vv;
                if s > away_score {
                    away_score = s;
                    away = k;
                }
            }
        }
        if away == fw {
            break;
        }
        let (aj, av) = vertex_coord(away, w, radius);
        let mut dir = vec![0.0; d];
        dir[fj] += fv;
        dir[aj] -= av;
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let curv = 2.0 * model.quad_form(&dir);
        let max_step = alpha[away];
        let step = if curv > 0.0 { (-slope / curv).clamp(0.0, max_step) } else { max_step };
        if step == 0.0 {
            break;
        }
        alpha[fw] += step;
        alpha[away] -= step;
        if alpha[away] < 1e-300 {
            alpha[away] = 0.0;
        }
        x = vec![0.0; d];
        for (k, a) in alpha.iter().enumerate() {
            if *a > 0.0 {
                let (vj, vv) = vertex_coord(k, w, radius);
                x[vj] += a * vv;
            }
        }
    }
    SolveResult {
        objective: model.value(&x),
        residual: (super::l1::weighted_l1(&x, w) - radius).max(0.0),
        certificate: gap,
        iterations,
        converged: gap <= tol,
        x,
    }
}

/// Constrained least squares over the D̂₃-ball from raw design rows.
pub fn solve_lasso(rows: &[f64], y: &[f64], dim: usize, weights: &[f64], radius: f64, tol: f64, budget: usize) -> SolveResult {
    solve_quadratic_l1(&QuadraticModel::least_squares(rows, y, dim), weights, radius, tol, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::l1::weighted_l1;

    #[test]
    fn zero_response_gives_zero() {
        let rows = [1.0, 0.5, -0.3, 2.0, 0.7, 0.1];
        let r = solve_lasso(&rows, &[0.0, 0.0, 0.0], 2, &[1.0, 1.0], 1.0, 1e-12, 1000);
        assert!(r.converged);
        assert!(r.objective.abs() < 1e-12);
        assert!(r.x.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn interior_least_squares_recovered() {
        // Normal equations: Σ x = b with Σ = [[2, 0.5], [0.5, 1]], x = (0.2, −0.1).
        let model = QuadraticModel { dim: 2, sigma: vec![2.0, 0.5, 0.5, 1.0], b: vec![0.35, 0.0], c: 1.0 };
        let r = solve_quadratic_l1(&model, &[1.0, 1.0], 1.0, 1e-14, 10_000);
        assert!(r.converged);
        assert!((r.x[0] - 0.2).abs() < 1e-6 && (r.x[1] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn boundary_solution_is_feasible() {
        let model = QuadraticModel { dim: 3, sigma: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], b: vec![2.0, -1.0, 0.5], c: 0.0 };
        let w = [1.0, 2.0, 0.5];
        let r = solve_quadratic_l1(&model, &w, 1.0, 1e-12, 10_000);
        assert!(r.converged);
        assert!(weighted_l1(&r.x, &w) <= 1.0 + 1e-12);
        assert!((weighted_l1(&r.x, &w) - 1.0).abs() < 1e-9);
    }
}
