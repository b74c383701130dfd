//! Localized sample-average-approximation theory for heavy-tailed stochastic
//! convex programs.
//!
//! The crate evaluates the deterministic perturbation conditions that make
//! near-solutions of an empirical program near-solutions of the population
//! program, the chaining-based variance proxies built on localized sets, the
//! concentration inequalities behind them, and a heavy-tailed LASSO
//! persistence experiment. Everything is driven by synthetic instances with
//! closed-form ground truth so the guarantees can be checked by Monte Carlo.

pub mod concentration;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod lasso;
pub mod parallel;
pub mod perturbation;
pub mod problem;
pub mod rng;
pub mod sets;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
