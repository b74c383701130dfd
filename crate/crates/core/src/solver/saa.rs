//! Switching subgradient method for the empirical program.

use super::grid::{brute_force_min, refine_min};
use super::SolveResult;
use crate::error::{Error, Result};
use crate::problem::{dot, EmpiricalProblem};

/// Grid-and-zoom minimum of the empirical program for d ≤ 3.
pub fn grid_reference(problem: &EmpiricalProblem) -> Result<(f64, Vec<f64>)> {
    let d = problem.hard_set.dim();
    let per_side = match d {
        1 => 4001,
        2 => 201,
        3 => 41,
        _ => return Err(Error::InvalidParameter(format!("grid reference needs d <= 3, got {d}"))),
    };
    let (lo, hi) = problem.hard_set.bounding_box();
    let mesh = (hi[0] - lo[0]) / (per_side - 1) as f64;
    let f = |x: &[f64]| problem.objective(x);
    let feasible = |x: &[f64]| problem.hard_set.contains_strict(x) && problem.residual(x) == 0.0;
    let g = brute_force_min(&f, &feasible, &lo, &hi, mesh, problem.lipschitz(0))?;
    let mut best = (g.value, g.argmins[0].clone());
    for start in g.argmins.iter().take(4) {
        let cand = refine_min(&f, &feasible, start, mesh);
        if cand.0 < best.0 {
            best = cand;
        }
    }
    Ok(best)
}

/// Switching subgradient: a step on the most violated constraint when
/// max_i F̂ᵢ(x) − ε̂ exceeds `tol_feas`, otherwise a step on the objective.
///
/// Steps are Polyak-type against the grid reference when d ≤ 3 and c/√k with
/// c = D(Y)/𝖫̂ otherwise.
pub fn solve_saa(problem: &EmpiricalProblem, tol_opt: f64, tol_feas: f64, budget: usize) -> Result<SolveResult> {
    if !(tol_opt > 0.0 && tol_feas > 0.0) {
        return Err(Error::InvalidParameter("tolerances must be positive".into()));
    }
    let y = &problem.hard_set;
    let reference = if y.dim() <= 3 { grid_reference(problem).ok() } else { None };
    let lip = (0..=problem.m()).map(|i| problem.lipschitz(i)).fold(0.0, f64::max).max(1e-12);
    let c = y.diameter() / lip;

    let mut x = y.center.clone();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut avg = vec![0.0; x.len()];
    let mut avg_weight = 0.0;
    let mut iterations = 0;
    let done = |best: &Option<(f64, Vec<f64>)>| match (&reference, best) {
        (Some((v, _)), Some((b, _))) => b - v <= tol_opt,
        _ => false,
    };
    for k in 1..=budget {
        iterations = k;
        let (worst, viol) = (1..=problem.m())
            .map(|i| (i, problem.fns[i].value(&x) - problem.relaxation))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let (g, step) = if viol > tol_feas {
            let g = problem.fns[worst].subgradient(&x);
            let gg = dot(&g, &g);
            if gg == 0.0 {
                break;
            }
            (g, viol / gg)
        } else {
            let fx = problem.objective(&x);
            if best.as_ref().is_none_or(|(b, _)| fx < *b) {
                best = Some((fx, x.clone()));
            }
            if done(&best) {
                break;
            }
            let g = problem.fns[0].subgradient(&x);
            let gg = dot(&g, &g);
            if gg == 0.0 {
                break;
            }
            let step = match &reference {
                Some((v, _)) => ((fx - v).max(0.0) + tol_opt / 2.0) / gg,
                None => c / (k as f64).sqrt() / gg.sqrt(),
            };
            for (a, xi) in avg.iter_mut().zip(&x) {
                *a += step * xi;
            }
            avg_weight += step;
            (g, step)
        };
        let next: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        x = y.project(&next);
    }
    if avg_weight > 0.0 {
        let a: Vec<f64> = avg.iter().map(|v| v / avg_weight).collect();
        let a = y.project(&a);
        if problem.residual(&a) <= tol_feas {
            let fa = problem.objective(&a);
            if best.as_ref().is_none_or(|(b, _)| fa < *b) {
                best = Some((fa, a));
            }
        }
    }
    let (objective, x) = best.unwrap_or_else(|| (problem.objective(&x), x));
    let residual = problem.residual(&x);
    let certificate = match &reference {
        Some((v, _)) => (objective - v).max(0.0),
        None => f64::INFINITY,
    };
    Ok(SolveResult {
        converged: certificate <= tol_opt && residual <= tol_feas,
        objective,
        residual,
        certificate,
        iterations,
        x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{EmpiricalLoss, FnFunction, HardSet, HardSetKind};
    use std::sync::Arc;

    fn problem(fns: Vec<FnFunction>, y: HardSet) -> EmpiricalProblem {
        EmpiricalProblem::from_functions(y, fns.into_iter().map(|f| Arc::new(f) as Arc<dyn EmpiricalLoss>).collect(), 0.0)
    }

    #[test]
    fn monotone_objective_on_interval() {
        let y = HardSet::new(HardSetKind::Box, vec![0.5], 0.5).unwrap();
        let r = solve_saa(&problem(vec![FnFunction::affine(vec![1.0], 0.0)], y), 1e-6, 1e-9, 10_000).unwrap();
        assert!(r.converged);
        assert!(r.x[0].abs() < 1e-5);
    }

    #[test]
    fn squared_norm_on_ball() {
        let f = FnFunction::new(|x| dot(x, x), |x| x.iter().map(|v| 2.0 * v).collect(), 2.0);
        let r = solve_saa(&problem(vec![f], HardSet::unit_ball(2)), 1e-8, 1e-9, 10_000).unwrap();
        assert!(r.converged);
        assert!(dot(&r.x, &r.x) < 1e-7);
    }

    #[test]
    fn piecewise_affine_with_constraint() {
        let f = FnFunction::new(
            |x| (x[0] - 2.0 * x[1]).max(-x[0] + 0.5 * x[1] + 0.2),
            |x| if x[0] - 2.0 * x[1] >= -x[0] + 0.5 * x[1] + 0.2 { vec![1.0, -2.0] } else { vec![-1.0, 0.5] },
            2.3,
        );
        let c = FnFunction::affine(vec![0.3, 1.0], -0.4);
        let p = problem(vec![f, c], HardSet::unit_box(2));
        let r = solve_saa(&p, 1e-6, 1e-9, 20_000).unwrap();
        let (v, _) = grid_reference(&p).unwrap();
        assert!(r.converged, "{r:?}");
        assert!((r.objective - v).abs() <= 1e-6);
        assert!(r.residual <= 1e-9);
    }
}
