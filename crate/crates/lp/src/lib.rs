//! Self-contained linear and mixed-integer programming.
//!
//! [`solve_lp`] runs a bounded-variable revised primal simplex and reports
//! row duals and reduced costs in the sign convention of the original
//! objective: `dual_i = ∂objective/∂rhs_i` and `reduced_cost_j = c_j - Σ_i dual_i a_ij`.
//! [`solve_milp`] wraps it in best-first branch-and-bound.

mod lu;
pub mod milp;
pub mod mps;
mod problem;
mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use milp::{solve_milp, Branching, IncumbentEvent, MilpOptions, MilpResult, Pseudocosts};
pub use problem::{Column, LpProblem, Row, RowSense, Sense};
pub use simplex::{Basis, Simplex, VarStatus};

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("column {column} has invalid bounds [{lower}, {upper}]")]
    InvalidBounds { column: usize, lower: f64, upper: f64 },
    #[error("row {row} references column {column}, which does not exist")]
    ColumnOutOfRange { row: usize, column: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Tolerances shared by every solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub feasibility: f64,
    pub optimality: f64,
    pub integrality: f64,
    pub pivot: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-7,
            optimality: 1e-7,
            integrality: 1e-6,
            pivot: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// The solver lost numerical control; no claim about the problem is made.
    Numerical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    #[serde(skip)]
    pub basis: Option<Basis>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Objective of the dual built from the reported multipliers:
    /// `Σ_i dual_i b_i + Σ_j` (reduced cost times the bound it prices).
    ///
    /// Reduced costs within `tol` of zero are treated as zero; a reduced cost
    /// that prices an infinite bound makes the dual value infinite.
    pub fn dual_objective(&self, problem: &LpProblem, tol: f64) -> f64 {
        let mut value: f64 = problem
            .rows
            .iter()
            .zip(&self.duals)
            .map(|(r, d)| r.rhs * d)
            .sum();
        let max = problem.sense == Sense::Maximize;
        for (c, &d) in problem.columns.iter().zip(&self.reduced_costs) {
            if d.abs() <= tol {
                continue;
            }
            // Maximization: positive reduced cost sits at the upper bound.
            let at_upper = (d > 0.0) == max;
            let b = if at_upper { c.upper } else { c.lower };
            value += if b.is_finite() {
                d * b
            } else if max {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        value
    }

    /// `Σ_i |dual_i · slack_i|` over rows plus `Σ_j |d_j · (distance of x_j to its priced bound)|`.
    pub fn complementarity(&self, problem: &LpProblem) -> f64 {
        let act = problem.row_activity(&self.primal);
        let mut total = 0.0;
        for ((r, a), d) in problem.rows.iter().zip(act).zip(&self.duals) {
            total += (d * (r.rhs - a)).abs();
        }
        let max = problem.sense == Sense::Maximize;
        for ((c, &x), &d) in problem.columns.iter().zip(&self.primal).zip(&self.reduced_costs) {
            if d == 0.0 {
                continue;
            }
            let at_upper = (d > 0.0) == max;
            let b = if at_upper { c.upper } else { c.lower };
            if b.is_finite() {
                total += (d * (x - b)).abs();
            } else {
                total += (d * x).abs();
            }
        }
        total
    }

    /// Largest sign violation of the dual multipliers and reduced costs.
    pub fn dual_infeasibility(&self, problem: &LpProblem) -> f64 {
        let max = problem.sense == Sense::Maximize;
        let mut worst: f64 = 0.0;
        for (r, &d) in problem.rows.iter().zip(&self.duals) {
            // For maximization a ≤ row has a nonnegative dual.
            let signed = if max { d } else { -d };
            worst = worst.max(match r.sense {
                RowSense::Le => -signed,
                RowSense::Ge => signed,
                RowSense::Eq => 0.0,
            });
        }
        for (c, &d) in problem.columns.iter().zip(&self.reduced_costs) {
            let signed = if max { d } else { -d };
            // signed > 0 wants an upper bound, signed < 0 a lower bound.
            if signed > 0.0 && !c.upper.is_finite() {
                worst = worst.max(signed);
            }
            if signed < 0.0 && !c.lower.is_finite() {
                worst = worst.max(-signed);
            }
        }
        worst
    }
}

/// Solves the continuous relaxation of `problem` (integrality flags are ignored).
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    solve_lp_warm(problem, None)
}

/// As [`solve_lp`], starting from `warm` when its shape matches the problem.
pub fn solve_lp_warm(problem: &LpProblem, warm: Option<&Basis>) -> Result<LpSolution, LpError> {
    let sx = Simplex::new(problem, Tolerances::default())?;
    Ok(sx.solve(warm))
}
