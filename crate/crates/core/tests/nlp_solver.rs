use std::time::Instant;

use gaussctl::nlp::{
    colour_columns, kkt_residual, solve, sparse_fd_jacobian, DerivativeMode, Nlp, SolveStatus, SolverOptions,
};
use proptest::prelude::*;

struct Quadratic;

impl Nlp for Quadratic {
    fn num_variables(&self) -> usize {
        1
    }
    fn num_constraints(&self) -> usize {
        0
    }
    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![10.0])
    }
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![], vec![])
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (x[0] - 3.0).powi(2)
    }
    fn objective_gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = 2.0 * (x[0] - 3.0);
    }
    fn constraints(&self, _: &[f64], _: &mut [f64]) {}
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        vec![]
    }
    fn jacobian_values(&self, _: &[f64], _: &mut [f64]) {}
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        vec![(0, 0)]
    }
    fn hessian_values(&self, _: &[f64], s: f64, _: &[f64], v: &mut [f64]) {
        v[0] = 2.0 * s;
    }
}

/// Minimum-energy rest-to-rest transfer of a double integrator on [0, 1],
/// compressed Hermite-Simpson with midpoint controls. Per node
/// `(x, v, u, u_mid)`, the last node has no midpoint control. Boundary
/// states are fixed through variable bounds at the start and constraints at
/// the end.
struct DoubleIntegrator {
    nodes: usize,
    rate_scaled: bool,
}

impl DoubleIntegrator {
    const STRIDE: usize = 4;
    fn h(&self) -> f64 {
        1.0 / (self.nodes - 1) as f64
    }
    fn x(&self, k: usize) -> usize {
        Self::STRIDE * k
    }
    fn v(&self, k: usize) -> usize {
        Self::STRIDE * k + 1
    }
    fn u(&self, k: usize) -> usize {
        Self::STRIDE * k + 2
    }
    fn um(&self, k: usize) -> usize {
        Self::STRIDE * k + 3
    }
    fn weights(&self) -> Vec<(usize, f64)> {
        let h = self.h();
        let mut w = Vec::new();
        for k in 0..self.nodes - 1 {
            w.push((self.u(k), h / 6.0));
            w.push((self.um(k), 4.0 * h / 6.0));
            w.push((self.u(k + 1), h / 6.0));
        }
        w
    }
    // (row, col, coefficient) of the linear constraints; rate-scaled
    // defects are divided by h
    fn linear_rows(&self) -> Vec<(usize, usize, f64)> {
        let h = self.h();
        let mut t = Vec::new();
        for k in 0..self.nodes - 1 {
            let (rx, rv) = (2 * k, 2 * k + 1);
            // x_{k+1} - x_k - h/6 (v_k + 4 v_mid + v_{k+1}),
            // v_mid = (v_k + v_{k+1})/2 + h/8 (u_k - u_{k+1})
            t.push((rx, self.x(k + 1), 1.0));
            t.push((rx, self.x(k), -1.0));
            t.push((rx, self.v(k), -h / 6.0 * 3.0));
            t.push((rx, self.v(k + 1), -h / 6.0 * 3.0));
            t.push((rx, self.u(k), -h / 6.0 * 4.0 * h / 8.0));
            t.push((rx, self.u(k + 1), h / 6.0 * 4.0 * h / 8.0));
            // v_{k+1} - v_k - h/6 (u_k + 4 u_mid + u_{k+1})
            t.push((rv, self.v(k + 1), 1.0));
            t.push((rv, self.v(k), -1.0));
            t.push((rv, self.u(k), -h / 6.0));
            t.push((rv, self.um(k), -4.0 * h / 6.0));
            t.push((rv, self.u(k + 1), -h / 6.0));
        }
        if self.rate_scaled {
            for e in &mut t {
                e.2 /= h;
            }
        }
        let last = self.nodes - 1;
        let r = 2 * (self.nodes - 1);
        t.push((r, self.x(last), 1.0));
        t.push((r + 1, self.v(last), 1.0));
        t
    }
}

impl Nlp for DoubleIntegrator {
    fn num_variables(&self) -> usize {
        Self::STRIDE * self.nodes - 1
    }
    fn num_constraints(&self) -> usize {
        2 * (self.nodes - 1) + 2
    }
    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_variables();
        let mut lo = vec![-100.0; n];
        let mut hi = vec![100.0; n];
        for i in [self.x(0), self.v(0)] {
            lo[i] = 0.0;
            hi[i] = 0.0;
        }
        (lo, hi)
    }
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.num_constraints();
        let mut b = vec![0.0; m];
        b[m - 2] = 1.0;
        (b.clone(), b)
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.weights().iter().map(|&(i, w)| w * x[i] * x[i]).sum()
    }
    fn objective_gradient(&self, x: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        for (i, w) in self.weights() {
            g[i] += 2.0 * w * x[i];
        }
    }
    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, c, a) in self.linear_rows() {
            out[r] += a * x[c];
        }
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.linear_rows().iter().map(|&(r, c, _)| (r, c)).collect()
    }
    fn jacobian_values(&self, _: &[f64], v: &mut [f64]) {
        for (slot, (_, _, a)) in v.iter_mut().zip(self.linear_rows()) {
            *slot = a;
        }
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.weights().iter().map(|&(i, _)| (i, i)).collect()
    }
    fn hessian_values(&self, _: &[f64], s: f64, _: &[f64], v: &mut [f64]) {
        for (slot, (_, w)) in v.iter_mut().zip(self.weights()) {
            *slot = 2.0 * s * w;
        }
    }
}

/// min x + y  s.t.  x^2 + y^2 = 2, optional halfspace x - y <= b.
struct Circle {
    halfspace: Option<f64>,
}

impl Nlp for Circle {
    fn num_variables(&self) -> usize {
        2
    }
    fn num_constraints(&self) -> usize {
        1 + self.halfspace.is_some() as usize
    }
    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-5.0; 2], vec![5.0; 2])
    }
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self.halfspace {
            None => (vec![2.0], vec![2.0]),
            Some(b) => (vec![2.0, f64::NEG_INFINITY], vec![2.0, b]),
        }
    }
    fn objective(&self, x: &[f64]) -> f64 {
        x[0] + x[1]
    }
    fn objective_gradient(&self, _: &[f64], g: &mut [f64]) {
        g[0] = 1.0;
        g[1] = 1.0;
    }
    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * x[0] + x[1] * x[1];
        if self.halfspace.is_some() {
            out[1] = x[0] - x[1];
        }
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut s = vec![(0, 0), (0, 1)];
        if self.halfspace.is_some() {
            s.extend([(1, 0), (1, 1)]);
        }
        s
    }
    fn jacobian_values(&self, x: &[f64], v: &mut [f64]) {
        v[0] = 2.0 * x[0];
        v[1] = 2.0 * x[1];
        if self.halfspace.is_some() {
            v[2] = 1.0;
            v[3] = -1.0;
        }
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        vec![(0, 0), (1, 1)]
    }
    fn hessian_values(&self, _: &[f64], _: f64, lam: &[f64], v: &mut [f64]) {
        v[0] = 2.0 * lam[0];
        v[1] = 2.0 * lam[0];
    }
}

/// min sum (x_i - i)^2  s.t.  sum x_i = 0: one dense row.
struct Centred {
    n: usize,
}

impl Nlp for Centred {
    fn num_variables(&self) -> usize {
        self.n
    }
    fn num_constraints(&self) -> usize {
        1
    }
    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1e3; self.n], vec![1e3; self.n])
    }
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![0.0])
    }
    fn objective(&self, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(i, v)| (v - i as f64).powi(2)).sum()
    }
    fn objective_gradient(&self, x: &[f64], g: &mut [f64]) {
        for (i, v) in x.iter().enumerate() {
            g[i] = 2.0 * (v - i as f64);
        }
    }
    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x.iter().sum();
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        (0..self.n).map(|i| (0, i)).collect()
    }
    fn jacobian_values(&self, _: &[f64], v: &mut [f64]) {
        v.iter_mut().for_each(|x| *x = 1.0);
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        (0..self.n).map(|i| (i, i)).collect()
    }
    fn hessian_values(&self, _: &[f64], s: f64, _: &[f64], v: &mut [f64]) {
        v.iter_mut().for_each(|x| *x = 2.0 * s);
    }
}

/// x = 1 and x = 2 at once.
struct Contradiction;

impl Nlp for Contradiction {
    fn num_variables(&self) -> usize {
        1
    }
    fn num_constraints(&self) -> usize {
        2
    }
    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-10.0], vec![10.0])
    }
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0, 2.0], vec![1.0, 2.0])
    }
    fn objective(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn objective_gradient(&self, _: &[f64], g: &mut [f64]) {
        g[0] = 0.0;
    }
    fn constraints(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0];
        out[1] = x[0];
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        vec![(0, 0), (1, 0)]
    }
    fn jacobian_values(&self, _: &[f64], v: &mut [f64]) {
        v[0] = 1.0;
        v[1] = 1.0;
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        vec![]
    }
    fn hessian_values(&self, _: &[f64], _: f64, _: &[f64], _: &mut [f64]) {}
}

/// Objective is NaN for x > 1.
struct Poisoned;

impl Nlp for Poisoned {
    fn num_variables(&self) -> usize {
        3
    }
    fn num_constraints(&self) -> usize {
        0
    }
    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-10.0; 3], vec![10.0; 3])
    }
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![], vec![])
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (1.0 - x[2]).sqrt()
    }
    fn objective_gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = 0.0;
        g[1] = 0.0;
        g[2] = -0.5 / (1.0 - x[2]).sqrt();
    }
    fn constraints(&self, _: &[f64], _: &mut [f64]) {}
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        vec![]
    }
    fn jacobian_values(&self, _: &[f64], _: &mut [f64]) {}
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        vec![(2, 2)]
    }
    fn hessian_values(&self, x: &[f64], s: f64, _: &[f64], v: &mut [f64]) {
        v[0] = -s * 0.25 * (1.0 - x[2]).powf(-1.5);
    }
}

#[test]
fn interior_quadratic() {
    let sol = solve(&Quadratic, &[9.0], &SolverOptions::default()).unwrap();
    assert_eq!(sol.report.status, SolveStatus::Converged);
    assert!((sol.x[0] - 3.0).abs() < 1e-10);
    assert!(sol.report.final_objective.abs() < 1e-12);
}

#[test]
fn kkt_vanishes_at_unconstrained_minimum() {
    assert!(kkt_residual(&Quadratic, &[3.0], &[]) < 1e-12);
    assert!(kkt_residual(&Quadratic, &[5.0], &[]) > 1.0);
    // projected step from the lower bound is limited by nothing: |0 - 6|
    assert_eq!(kkt_residual(&Quadratic, &[0.0], &[]), 6.0);
}

#[test]
fn double_integrator_matches_pontryagin() {
    let p = DoubleIntegrator { nodes: 101, rate_scaled: true };
    let x0 = vec![0.0; p.num_variables()];
    let sol = solve(&p, &x0, &SolverOptions::default()).unwrap();
    assert_eq!(sol.report.status, SolveStatus::Converged, "{:?}", sol.report);
    assert!(sol.report.max_constraint_violation <= 1e-6);
    let h = p.h();
    let mut worst: f64 = 0.0;
    for k in 0..p.nodes {
        let t = k as f64 * h;
        worst = worst.max((sol.x[p.u(k)] - (6.0 - 12.0 * t)).abs());
        if k + 1 < p.nodes {
            worst = worst.max((sol.x[p.um(k)] - (6.0 - 12.0 * (t + h / 2.0))).abs());
        }
    }
    assert!(worst < 1e-4, "sup-norm error {worst}");
    // optimal cost 12
    assert!((sol.report.final_objective - 12.0).abs() < 1e-4);
    assert!(kkt_residual(&p, &sol.x, &sol.multipliers) <= SolverOptions::default().optimality_tol);
}

#[test]
fn equality_with_curvature_and_inequality() {
    let sol = solve(&Circle { halfspace: None }, &[0.5, -0.2], &SolverOptions::default()).unwrap();
    assert!(sol.report.converged(), "{:?}", sol.report);
    assert!((sol.x[0] + 1.0).abs() < 1e-5 && (sol.x[1] + 1.0).abs() < 1e-5, "{:?}", sol.x);
    assert!((sol.multipliers[0] - 0.5).abs() < 1e-4);

    // x - y <= -1 cuts off (-1, -1); optimum on the circle where x - y = -1
    let sol = solve(&Circle { halfspace: Some(-1.0) }, &[0.5, -0.2], &SolverOptions::default()).unwrap();
    assert!(sol.report.converged(), "{:?}", sol.report);
    let x = (-1.0 - 3.0_f64.sqrt()) / 2.0;
    assert!((sol.x[0] - x).abs() < 1e-5 && (sol.x[1] - (x + 1.0)).abs() < 1e-5, "{:?}", sol.x);
    assert!(sol.multipliers[1] > 0.0);

    // inactive halfspace leaves the solution alone with zero multiplier
    let sol = solve(&Circle { halfspace: Some(3.0) }, &[0.5, -0.2], &SolverOptions::default()).unwrap();
    assert!(sol.report.converged());
    assert!((sol.x[0] + 1.0).abs() < 1e-5);
    assert_eq!(sol.multipliers[1], 0.0);
}

#[test]
fn dense_row_uses_low_rank_update() {
    let n = 300;
    let sol = solve(&Centred { n }, &vec![0.0; n], &SolverOptions::default()).unwrap();
    assert!(sol.report.converged(), "{:?}", sol.report);
    let mean = (n - 1) as f64 / 2.0;
    for (i, v) in sol.x.iter().enumerate() {
        assert!((v - (i as f64 - mean)).abs() < 1e-6);
    }
}

#[test]
fn contradictory_constraints_are_infeasible() {
    let sol = solve(&Contradiction, &[0.0], &SolverOptions::default()).unwrap();
    assert_eq!(sol.report.status, SolveStatus::Infeasible);
}

#[test]
fn non_finite_values_name_the_variable() {
    let sol = solve(&Poisoned, &[0.0, 0.0, 1.5], &SolverOptions::default()).unwrap();
    assert_eq!(sol.report.status, SolveStatus::NumericFailure);
    let sol = solve(&Poisoned, &[0.0, f64::NAN, 0.0], &SolverOptions::default()).unwrap();
    assert_eq!(sol.report.status, SolveStatus::NumericFailure);
    assert!(sol.report.message.unwrap().contains("variable 1"));
}

#[test]
fn malformed_input_is_an_error() {
    assert!(solve(&Quadratic, &[1.0, 2.0], &SolverOptions::default()).is_err());
    let bad = SolverOptions { penalty_growth: 1.0, ..Default::default() };
    assert!(solve(&Quadratic, &[1.0], &bad).is_err());
}

#[test]
fn finite_difference_mode_agrees() {
    let p = DoubleIntegrator { nodes: 21, rate_scaled: false };
    let x0 = vec![0.0; p.num_variables()];
    let a = solve(&p, &x0, &SolverOptions::default()).unwrap();
    let opts = SolverOptions { derivative_mode: DerivativeMode::SparseFiniteDifference, ..Default::default() };
    let b = solve(&p, &x0, &opts).unwrap();
    assert!(b.report.converged());
    for (u, v) in a.x.iter().zip(&b.x) {
        assert!((u - v).abs() < 1e-5);
    }
    let c = solve(&Circle { halfspace: Some(-1.0) }, &[0.5, -0.2], &opts).unwrap();
    assert!(c.report.converged());
}

#[test]
fn deterministic() {
    let p = Circle { halfspace: Some(-1.0) };
    let a = solve(&p, &[0.3, 0.1], &SolverOptions::default()).unwrap();
    let b = solve(&p, &[0.3, 0.1], &SolverOptions::default()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.multipliers, b.multipliers);
    assert_eq!(a.report.trace, b.report.trace);
}

fn stabilised_violations_non_increasing(trace: &[gaussctl::nlp::TraceRow]) -> bool {
    let last_change = trace.windows(2).rposition(|w| w[1].penalty != w[0].penalty).map_or(0, |i| i + 1);
    trace[last_change..].windows(2).all(|w| w[1].violation <= w[0].violation * (1.0 + 1e-9) + 1e-15)
}

#[test]
fn feasibility_monotone_after_penalty_settles() {
    let di = DoubleIntegrator { nodes: 41, rate_scaled: false };
    for sol in [
        solve(&di, &vec![0.0; di.num_variables()], &SolverOptions::default()).unwrap(),
        solve(&Circle { halfspace: None }, &[2.0, 0.3], &SolverOptions::default()).unwrap(),
        solve(&Circle { halfspace: Some(-1.0) }, &[2.0, 0.3], &SolverOptions::default()).unwrap(),
    ] {
        assert!(sol.report.converged());
        assert!(stabilised_violations_non_increasing(&sol.report.trace), "{:?}", sol.report.trace);
    }
}

#[test]
fn cost_grows_linearly_with_mesh_size() {
    let time = |nodes: usize| {
        let p = DoubleIntegrator { nodes, rate_scaled: false };
        let x0 = vec![0.0; p.num_variables()];
        (0..3)
            .map(|_| {
                let t = Instant::now();
                let s = solve(&p, &x0, &SolverOptions::default()).unwrap();
                assert!(s.report.converged());
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (t1, t2) = (time(1000), time(2000));
    let ratio = t2 / t1;
    assert!(ratio < 3.0, "N=2000 took {ratio:.2}x the N=1000 time");
}

#[test]
fn report_serialises() {
    let sol = solve(&Quadratic, &[9.0], &SolverOptions::default()).unwrap();
    let json = sol.report.to_json();
    assert!(json.contains("\"status\": \"converged\""));
    let mut buf = Vec::new();
    sol.report.write_trace_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("iter,objective,violation,kkt\n"));
    assert_eq!(text.lines().count(), sol.report.trace.len() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn circle_jacobian_matches_differences(x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let p = Circle { halfspace: Some(0.0) };
        let s = p.jacobian_structure();
        let mut exact = vec![0.0; s.len()];
        p.jacobian_values(&[x, y], &mut exact);
        let mut fd = vec![0.0; s.len()];
        sparse_fd_jacobian(|x, c| p.constraints(x, c), &[x, y], 2, &s, &colour_columns(2, &s), &mut fd);
        for (a, b) in exact.iter().zip(&fd) {
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn inner_budget_stops_the_solve() {
    let p = DoubleIntegrator { nodes: 41, rate_scaled: true };
    let x0 = vec![0.0; p.num_variables()];
    let opts = SolverOptions { inner_budget: Some(1), ..Default::default() };
    let sol = solve(&p, &x0, &opts).unwrap();
    assert_eq!(sol.report.status, SolveStatus::MaxIter);
    assert_eq!(sol.report.inner_iterations, 1);
    assert!(sol.report.message.as_deref().unwrap().contains("budget"));
    assert!(SolverOptions { inner_budget: Some(0), ..Default::default() }.validate().is_err());
}
