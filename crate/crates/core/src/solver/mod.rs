//! Solvers for the empirical and exact programs.

pub mod grid;
pub mod l1;
pub mod lasso;
pub mod saa;

pub use grid::{brute_force_min, refine_min, Grid, GridMin};
pub use l1::{linear_min_weighted_l1, project_weighted_l1, weighted_l1};
pub use lasso::{solve_lasso, solve_quadratic_l1, QuadraticModel};
pub use saa::{grid_reference, solve_saa};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub residual: f64,
    /// Duality gap (Frank–Wolfe) or gap to the grid oracle (subgradient).
    pub certificate: f64,
    pub iterations: usize,
    pub converged: bool,
}
