//! Exhaustive grid scans and local zoom refinement for d ≤ 3.

use crate::error::{Error, Result};
use crate::parallel;

/// Result of an exhaustive grid scan.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMin {
    pub value: f64,
    /// Every feasible grid point whose value is within η of the minimum.
    pub argmins: Vec<Vec<f64>>,
    pub mesh: f64,
    /// 𝖫·mesh·√d.
    pub error_bound: f64,
    pub points: usize,
}

/// Axis-aligned grid with equal spacing no larger than the requested mesh.
#[derive(Debug, Clone)]
pub struct Grid {
    lo: Vec<f64>,
    step: Vec<f64>,
    per_side: Vec<usize>,
}

impl Grid {
    pub fn new(lo: &[f64], hi: &[f64], mesh: f64) -> Self {
        let per_side: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| ((b - a) / mesh - 1e-9).ceil().max(0.0) as usize + 1)
            .collect();
        let step = lo
            .iter()
            .zip(hi)
            .zip(&per_side)
            .map(|((a, b), n)| if *n > 1 { (b - a) / (*n - 1) as f64 } else { 0.0 })
            .collect();
        Self { lo: lo.to_vec(), step, per_side }
    }

    pub fn len(&self) -> usize {
        self.per_side.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mesh(&self) -> f64 {
        self.step.iter().fold(0.0, |m, s| m.max(*s))
    }

    pub fn point(&self, mut idx: usize, out: &mut [f64]) {
        for k in (0..self.lo.len()).rev() {
            let n = self.per_side[k];
            out[k] = self.lo[k] + (idx % n) as f64 * self.step[k];
            idx /= n;
        }
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let d = self.lo.len();
        (0..self.len()).map(move |i| {
            let mut p = vec![0.0; d];
            self.point(i, &mut p);
            p
        })
    }
}

type Objective<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);
type Membership<'a> = &'a (dyn Fn(&[f64]) -> bool + Sync);

/// Exhaustive scan over a box grid, restricted to feasible points.
pub fn brute_force_min(
    objective: Objective<'_>,
    feasible: Membership<'_>,
    lo: &[f64],
    hi: &[f64],
    mesh: f64,
    lipschitz: f64,
) -> Result<GridMin> {
    let d = lo.len();
    if d > 3 {
        return Err(Error::InvalidParameter(format!("grid scans need d <= 3, got {d}")));
    }
    if !(mesh > 0.0) {
        return Err(Error::InvalidParameter(format!("mesh must be positive, got {mesh}")));
    }
    let grid = Grid::new(lo, hi, mesh);
    let total = grid.len();
    let chunk = 4096;
    let chunks = total.div_ceil(chunk);
    let values: Vec<Vec<(usize, f64)>> = parallel::map_indexed(chunks, |c| {
        let mut p = vec![0.0; d];
        let mut out = Vec::new();
        for i in c * chunk..((c + 1) * chunk).min(total) {
            grid.point(i, &mut p);
            if feasible(&p) {
                out.push((i, objective(&p)));
            }
        }
        out
    });
    let min = values.iter().flatten().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::EmptySet);
    }
    let eta = 1e-9 * (1.0 + min.abs());
    let argmins = values
        .iter()
        .flatten()
        .filter(|(_, v)| *v <= min + eta)
        .map(|(i, _)| {
            let mut p = vec![0.0; d];
            grid.point(*i, &mut p);
            p
        })
        .collect();
    let mesh = grid.mesh();
    Ok(GridMin { value: min, argmins, mesh, error_bound: lipschitz * mesh * (d as f64).sqrt(), points: total })
}

/// Successive local grids of 21 points per side around the incumbent,
/// halving the spacing each round.
pub fn refine_min(objective: Objective<'_>, feasible: Membership<'_>, start: &[f64], mesh: f64) -> (f64, Vec<f64>) {
    let d = start.len();
    let mut best = start.to_vec();
    let mut best_val = objective(start);
    let mut h = mesh;
    let scale = 1.0 + start.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut p = vec![0.0; d];
    while h > 1e-13 * scale {
        let lo: Vec<f64> = best.iter().map(|c| c - 5.0 * h).collect();
        let hi: Vec<f64> = best.iter().map(|c| c + 5.0 * h).collect();
        let grid = Grid::new(&lo, &hi, h / 2.0);
        let center = best.clone();
        for i in 0..grid.len() {
            grid.point(i, &mut p);
            if p == center || !feasible(&p) {
                continue;
            }
            let v = objective(&p);
            if v < best_val {
                best_val = v;
                best = p.clone();
            }
        }
        h /= 2.0;
    }
    (best_val, best)
}
