use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HardSetKind {
    /// Axis-aligned box: the sup-norm ball of the given radius.
    Box,
    /// Euclidean ball.
    Ball,
}

/// The hard set Y, a box or Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardSet {
    pub kind: HardSetKind,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl HardSet {
    pub fn new(kind: HardSetKind, center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(invalid("hard set needs dimension >= 1"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("hard set radius must be positive, got {radius}")));
        }
        Ok(Self { kind, center, radius })
    }

    pub fn unit_box(d: usize) -> Self {
        Self { kind: HardSetKind::Box, center: vec![0.0; d], radius: 1.0 }
    }

    pub fn unit_ball(d: usize) -> Self {
        Self { kind: HardSetKind::Ball, center: vec![0.0; d], radius: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn slack(&self) -> f64 {
        1e-12 * (1.0 + self.radius)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self.kind {
            HardSetKind::Box => x
                .iter()
                .zip(&self.center)
                .all(|(a, c)| (a - c).abs() <= self.radius + self.slack()),
            HardSetKind::Ball => dist(x, &self.center) <= self.radius + self.slack(),
        }
    }

    /// Membership without the rounding slack of [`HardSet::contains`].
    pub fn contains_strict(&self, x: &[f64]) -> bool {
        match self.kind {
            HardSetKind::Box => x.iter().zip(&self.center).all(|(a, c)| (a - c).abs() <= self.radius),
            HardSetKind::Ball => dist(x, &self.center) <= self.radius,
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            HardSetKind::Box => x
                .iter()
                .zip(&self.center)
                .map(|(a, c)| a.clamp(c - self.radius, c + self.radius))
                .collect(),
            HardSetKind::Ball => {
                let r = dist(x, &self.center);
                if r <= self.radius {
                    x.to_vec()
                } else {
                    let s = self.radius / r;
                    x.iter().zip(&self.center).map(|(a, c)| c + s * (a - c)).collect()
                }
            }
        }
    }

    /// Radius of the smallest Euclidean ball around the center containing Y.
    pub fn circumradius(&self) -> f64 {
        match self.kind {
            HardSetKind::Box => self.radius * (self.dim() as f64).sqrt(),
            HardSetKind::Ball => self.radius,
        }
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        2.0 * self.circumradius()
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.center.iter().map(|c| c - self.radius).collect();
        let hi = self.center.iter().map(|c| c + self.radius).collect();
        (lo, hi)
    }

    /// Largest distance from `c` to a point of Y.
    pub fn max_distance_from(&self, c: &[f64]) -> f64 {
        match self.kind {
            HardSetKind::Box => c
                .iter()
                .zip(&self.center)
                .map(|(a, m)| {
                    let e = (a - m).abs() + self.radius;
                    e * e
                })
                .sum::<f64>()
                .sqrt(),
            HardSetKind::Ball => dist(c, &self.center) + self.radius,
        }
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_projection_and_diameter() {
        let y = HardSet::unit_box(2);
        assert_eq!(y.project(&[2.0, -0.5]), vec![1.0, -0.5]);
        assert!((y.diameter() - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(y.contains(&[1.0, -1.0]));
        assert!(!y.contains(&[1.01, 0.0]));
    }

    #[test]
    fn ball_projection() {
        let y = HardSet::unit_ball(2);
        let p = y.project(&[3.0, 4.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(y.diameter(), 2.0);
        assert_eq!(y.max_distance_from(&[0.5, 0.0]), 1.5);
    }
}
