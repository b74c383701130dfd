//! Simple convex pieces with exact projections, and Dykstra's algorithm for
//! projecting onto their intersection with the hard set.

use super::hardset::{dist, dot, HardSet};

#[derive(Debug, Clone, PartialEq)]
pub enum SimpleSet {
    Everything,
    Nothing,
    /// {x : ⟨normal, x⟩ ≤ offset}.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    /// Closed Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    Intersection(Vec<SimpleSet>),
}

impl SimpleSet {
    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Self {
        if normal.iter().all(|v| *v == 0.0) {
            if offset >= 0.0 {
                SimpleSet::Everything
            } else {
                SimpleSet::Nothing
            }
        } else {
            SimpleSet::HalfSpace { normal, offset }
        }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        if radius < 0.0 {
            SimpleSet::Nothing
        } else {
            SimpleSet::Ball { center, radius }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            SimpleSet::Everything => true,
            SimpleSet::Nothing => false,
            SimpleSet::HalfSpace { normal, offset } => dot(normal, x) <= offset + tol,
            SimpleSet::Ball { center, radius } => dist(x, center) <= radius + tol,
            SimpleSet::Intersection(parts) => parts.iter().all(|p| p.contains(x, tol)),
        }
    }

    /// Flattened list of primitive pieces; `None` if the set is trivially empty.
    pub fn pieces(&self) -> Option<Vec<SimpleSet>> {
        let mut out = Vec::new();
        if self.collect(&mut out) {
            Some(out)
        } else {
            None
        }
    }

    fn collect(&self, out: &mut Vec<SimpleSet>) -> bool {
        match self {
            SimpleSet::Everything => true,
            SimpleSet::Nothing => false,
            SimpleSet::Intersection(parts) => parts.iter().all(|p| p.collect(out)),
            other => {
                out.push(other.clone());
                true
            }
        }
    }

    fn project_primitive(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SimpleSet::HalfSpace { normal, offset } => {
                let excess = dot(normal, x) - offset;
                if excess <= 0.0 {
                    x.to_vec()
                } else {
                    let s = excess / dot(normal, normal);
                    x.iter().zip(normal).map(|(a, n)| a - s * n).collect()
                }
            }
            SimpleSet::Ball { center, radius } => {
                let r = dist(x, center);
                if r <= *radius {
                    x.to_vec()
                } else {
                    let s = radius / r;
                    x.iter().zip(center).map(|(a, c)| c + s * (a - c)).collect()
                }
            }
            _ => x.to_vec(),
        }
    }
}

/// Euclidean projection onto Y ∩ pieces by Dykstra's alternating scheme.
///
/// Returns `None` when the intersection appears empty.
pub fn project_onto(hard_set: &HardSet, set: &SimpleSet, x: &[f64]) -> Option<Vec<f64>> {
    let pieces = set.pieces()?;
    if pieces.is_empty() {
        return Some(hard_set.project(x));
    }
    if pieces.iter().all(|p| p.contains(x, 0.0)) && hard_set.contains(x) {
        return Some(x.to_vec());
    }
    let k = pieces.len() + 1;
    let d = x.len();
    let mut incr = vec![vec![0.0; d]; k];
    let mut cur = x.to_vec();
    let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..10_000 {
        let prev = cur.clone();
        for j in 0..k {
            let shifted: Vec<f64> = cur.iter().zip(&incr[j]).map(|(a, b)| a + b).collect();
            let next = if j == 0 { hard_set.project(&shifted) } else { pieces[j - 1].project_primitive(&shifted) };
            incr[j] = shifted.iter().zip(&next).map(|(a, b)| a - b).collect();
            cur = next;
        }
        if dist(&cur, &prev) <= 1e-14 * scale {
            break;
        }
    }
    let tol = 1e-8 * scale;
    if hard_set_distance(hard_set, &cur) <= tol && pieces.iter().all(|p| p.contains(&cur, tol)) {
        Some(cur)
    } else {
        None
    }
}

fn hard_set_distance(hard_set: &HardSet, x: &[f64]) -> f64 {
    dist(x, &hard_set.project(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfspace_and_ball_projection() {
        let y = HardSet::unit_box(2);
        let h = SimpleSet::halfspace(vec![1.0, 1.0], 1.0);
        let p = project_onto(&y, &h, &[1.0, 1.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-9 && (p[1] - 0.5).abs() < 1e-9);
        let b = SimpleSet::ball(vec![0.0, 0.0], 0.5);
        let p = project_onto(&y, &b, &[2.0, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn corner_of_two_halfspaces() {
        let y = HardSet::unit_box(2);
        let s = SimpleSet::Intersection(vec![
            SimpleSet::halfspace(vec![1.0, 0.0], 0.2),
            SimpleSet::halfspace(vec![0.0, 1.0], -0.1),
        ]);
        let p = project_onto(&y, &s, &[0.9, 0.9]).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-9 && (p[1] + 0.1).abs() < 1e-9);
    }

    #[test]
    fn empty_intersection_detected() {
        let y = HardSet::unit_box(1);
        let s = SimpleSet::halfspace(vec![1.0], -2.0);
        assert!(project_onto(&y, &s, &[0.0]).is_none());
        assert!(project_onto(&y, &SimpleSet::Nothing, &[0.0]).is_none());
    }
}
