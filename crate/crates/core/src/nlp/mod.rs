//! Sparse nonlinear programs and an augmented-Lagrangian solver for them.
//!
//! Problems are described through the [`Nlp`] trait, which mirrors the usual
//! triplet-based interface of large-scale NLP codes: bounds, objective and
//! gradient, constraint residuals, the constraint Jacobian in coordinate form
//! and the lower triangle of the Lagrangian Hessian.
//!
//! [`solve`] runs a bound-constrained augmented-Lagrangian outer loop. Each
//! subproblem is minimised by projected, regularised Newton steps; the Newton
//! matrix is factored as a symmetric band (collocation problems are banded
//! when variables are ordered node by node), with rows of the Jacobian that
//! span the whole vector, such as an integral constraint, applied as a
//! low-rank Woodbury correction.

mod band;
mod fd;
mod solver;

use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use band::{BandCholesky, NotPositiveDefinite, SymBand};
pub use fd::{colour_columns, sparse_fd_hessian, sparse_fd_jacobian, symmetric_pattern};
pub use solver::solve;

/// A nonlinear program
///
/// ```text
///   min f(x)   s.t.   c_l <= c(x) <= c_u,   x_l <= x <= x_u.
/// ```
///
/// Equality rows have `c_l == c_u`. Structures may contain duplicate
/// coordinates; their values are summed.
pub trait Nlp: Sync {
    fn num_variables(&self) -> usize;
    fn num_constraints(&self) -> usize;
    /// `(lower, upper)` for every variable.
    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// `(lower, upper)` for every constraint row.
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn objective(&self, x: &[f64]) -> f64;
    fn objective_gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], out: &mut [f64]);
    /// `(row, column)` of every Jacobian entry.
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, x: &[f64], values: &mut [f64]);
    /// `(row, column)` with `row >= column` of the Lagrangian Hessian.
    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    /// Values of `obj_factor * H_f + sum_i multipliers[i] * H_{c_i}`.
    fn hessian_values(&self, x: &[f64], obj_factor: f64, multipliers: &[f64], values: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    /// Use the problem's Jacobian and Hessian.
    #[default]
    Analytic,
    /// Jacobian from coloured central differences of the constraints,
    /// Hessian from coloured central differences of the Lagrangian gradient.
    SparseFiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Outer (multiplier/penalty) iterations.
    pub max_iterations: usize,
    /// Newton iterations per subproblem.
    pub max_inner_iterations: usize,
    /// Newton iterations over the whole solve; `None` for no limit.
    pub inner_budget: Option<usize>,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub derivative_mode: DerivativeMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            max_inner_iterations: 200,
            inner_budget: None,
            feasibility_tol: 1e-6,
            optimality_tol: 1e-5,
            penalty_init: 1e4,
            penalty_growth: 10.0,
            derivative_mode: DerivativeMode::Analytic,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.feasibility_tol > 0.0
            && self.optimality_tol > 0.0
            && self.penalty_init > 0.0
            && self.penalty_growth > 1.0
            && self.max_iterations > 0
            && self.max_inner_iterations > 0
            && self.inner_budget != Some(0);
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidProblem(format!("invalid solver options: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
    NumericFailure,
}

/// One row of the outer-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub violation: f64,
    pub kkt: f64,
    pub penalty: f64,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Newton steps over all subproblems.
    pub inner_iterations: usize,
    pub final_objective: f64,
    pub max_constraint_violation: f64,
    pub kkt_residual: f64,
    pub wall_time: Duration,
    pub final_penalty: f64,
    /// Explanation for a numeric failure, naming the offending index.
    pub message: Option<String>,
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serialisable")
    }

    /// Iteration trace as CSV `iter, objective, violation, kkt`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> crate::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "objective", "violation", "kkt"])?;
        for r in &self.trace {
            w.write_record([
                r.iter.to_string(),
                format!("{:e}", r.objective),
                format!("{:e}", r.violation),
                format!("{:e}", r.kkt),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Solution vector, final multipliers and report.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub report: SolveReport,
}

/// Largest bound violation of `c` against `[lower, upper]`.
pub fn max_violation(c: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    c.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
        .fold(0.0, f64::max)
}

/// Infinity norm of `x - P(x - grad_x L)`, `L = f + multipliers . c`, where
/// `P` projects onto the variable bounds. Zero exactly at first-order
/// stationary points, with bound multipliers and complementarity implied by
/// the projection.
pub fn kkt_residual(nlp: &dyn Nlp, x: &[f64], multipliers: &[f64]) -> f64 {
    let n = nlp.num_variables();
    assert_eq!(x.len(), n, "x has wrong length");
    assert_eq!(multipliers.len(), nlp.num_constraints(), "multipliers have wrong length");
    let mut g = vec![0.0; n];
    nlp.objective_gradient(x, &mut g);
    let structure = nlp.jacobian_structure();
    let mut jac = vec![0.0; structure.len()];
    nlp.jacobian_values(x, &mut jac);
    for (&(r, c), v) in structure.iter().zip(&jac) {
        g[c] += multipliers[r] * v;
    }
    let (lo, hi) = nlp.variable_bounds();
    projected_gradient_norm(x, &g, &lo, &hi)
}

pub(crate) fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &u))| ((xi - gi).clamp(l, u) - xi).abs())
        .fold(0.0, f64::max)
}
