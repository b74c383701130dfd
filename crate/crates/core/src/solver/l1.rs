//! The weighted ℓ1 ball {x : Σ wₗ|xₗ| ≤ R}: projection and linear minimization.

/// Σ wₗ|xₗ|.
pub fn weighted_l1(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a.abs() * b).sum()
}

/// Euclidean projection onto the weighted ℓ1 ball.
///
/// The solution soft-thresholds at λ·wₗ; λ is found by scanning the sorted
/// breakpoints |vₗ|/wₗ.
pub fn project_weighted_l1(v: &[f64], w: &[f64], radius: f64) -> Vec<f64> {
    if weighted_l1(v, w) <= radius {
        return v.to_vec();
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| (v[b].abs() / w[b]).total_cmp(&(v[a].abs() / w[a])));
    let mut num = -radius;
    let mut den = 0.0;
    let mut lambda = 0.0;
    for (k, &l) in order.iter().enumerate() {
        num += w[l] * v[l].abs();
        den += w[l] * w[l];
        lambda = num / den;
        let next = order.get(k + 1).map_or(0.0, |&n| v[n].abs() / w[n]);
        if lambda >= next {
            break;
        }
    }
    v.iter()
        .zip(w)
        .map(|(a, b)| a.signum() * (a.abs() - lambda * b).max(0.0))
        .collect()
}

/// argmin of ⟨g, x⟩ over the weighted ℓ1 ball: a signed scaled basis vector.
pub fn linear_min_weighted_l1(g: &[f64], w: &[f64], radius: f64) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    if let Some(j) = best_vertex(g, w) {
        out[j] = -radius * g[j].signum() / w[j];
    }
    out
}

/// Index maximizing |gₗ|/wₗ, lowest index on ties; `None` for g = 0.
pub(crate) fn best_vertex(g: &[f64], w: &[f64]) -> Option<usize> {
    let mut best = None;
    let mut score = 0.0;
    for (j, (a, b)) in g.iter().zip(w).enumerate() {
        let s = a.abs() / b;
        if s > score {
            score = s;
            best = Some(j);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_examples() {
        assert_eq!(project_weighted_l1(&[0.2, 0.3], &[1.0, 1.0], 1.0), vec![0.2, 0.3]);
        let p = project_weighted_l1(&[2.0, 0.0], &[1.0, 1.0], 1.0);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        let p = project_weighted_l1(&[1.0, 1.0], &[1.0, 1.0], 1.0);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lmo_examples() {
        assert_eq!(linear_min_weighted_l1(&[3.0, -1.0], &[1.0, 2.0], 2.0), vec![-2.0, 0.0]);
        assert_eq!(linear_min_weighted_l1(&[0.0, 0.0], &[1.0, 2.0], 2.0), vec![0.0, 0.0]);
    }

    fn vec_and_weights() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..6).prop_flat_map(|d| {
            (
                prop::collection::vec(-3.0f64..3.0, d),
                prop::collection::vec(-3.0f64..3.0, d),
                prop::collection::vec(0.1f64..3.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn projection_is_feasible_idempotent_and_kkt((v, _u, w) in vec_and_weights(), r in 0.05f64..3.0) {
            let p = project_weighted_l1(&v, &w, r);
            prop_assert!(weighted_l1(&p, &w) <= r * (1.0 + 1e-12));
            let pp = project_weighted_l1(&p, &w, r);
            for (a, b) in p.iter().zip(&pp) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // Variational inequality: ⟨v − p, z − p⟩ ≤ 0 at every vertex z.
            for j in 0..v.len() {
                for s in [-1.0, 1.0] {
                    let mut z = vec![0.0; v.len()];
                    z[j] = s * r / w[j];
                    let ip: f64 = v.iter().zip(&p).zip(&z).map(|((a, b), c)| (a - b) * (c - b)).sum();
                    prop_assert!(ip <= 1e-9);
                }
            }
        }

        #[test]
        fn projection_is_nonexpansive((v, u, w) in vec_and_weights(), r in 0.05f64..3.0) {
            let a = project_weighted_l1(&v, &w, r);
            let b = project_weighted_l1(&u, &w, r);
            let lhs: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            let rhs: f64 = v.iter().zip(&u).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn lmo_beats_feasible_points((g, v, w) in vec_and_weights(), r in 0.05f64..3.0, c in 0.1f64..10.0) {
            let s = linear_min_weighted_l1(&g, &w, r);
            let z = project_weighted_l1(&v, &w, r);
            let gs: f64 = g.iter().zip(&s).map(|(a, b)| a * b).sum();
            let gz: f64 = g.iter().zip(&z).map(|(a, b)| a * b).sum();
            prop_assert!(gs <= gz + 1e-12);
            let scaled: Vec<f64> = g.iter().map(|a| a * c).collect();
            prop_assert_eq!(linear_min_weighted_l1(&scaled, &w, r), s);
        }
    }
}
