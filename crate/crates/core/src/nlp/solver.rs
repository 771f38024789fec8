use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::band::SymBand;
use super::fd::{colour_columns, sparse_fd_hessian, sparse_fd_jacobian, symmetric_pattern};
use super::{
    max_violation, projected_gradient_norm, DerivativeMode, Nlp, Solution, SolveReport, SolveStatus, SolverOptions,
    TraceRow,
};
use crate::{Error, Result};

/// Penalty beyond which the problem is declared infeasible.
const PENALTY_CAP: f64 = 1e10;
const ARMIJO: f64 = 1e-4;
const ACTIVE_EPS: f64 = 1e-3;
const MAX_BACKTRACKS: usize = 40;
/// Accepted steps that leave `x` unchanged before a subproblem gives up,
/// and consecutive such subproblems before the solve gives up.
const STALL_STEPS: usize = 5;
/// A row spanning more columns than this (and much more than the Hessian
/// band) is kept out of the band and applied by Woodbury.
const DENSE_ROW_SPAN: usize = 64;

struct Layout {
    n: usize,
    m: usize,
    xl: Vec<f64>,
    xu: Vec<f64>,
    cl: Vec<f64>,
    cu: Vec<f64>,
    jac: Vec<(usize, usize)>,
    // merged columns of every row and, per Jacobian entry, its slot there
    row_cols: Vec<Vec<usize>>,
    row_start: Vec<usize>,
    entry_slot: Vec<usize>,
    dense: Vec<bool>,
    hess: Vec<(usize, usize)>,
    bw: usize,
    fd: Option<(Vec<usize>, Vec<usize>)>,
}

impl Layout {
    fn new(nlp: &dyn Nlp, mode: DerivativeMode) -> Result<Self> {
        let n = nlp.num_variables();
        let m = nlp.num_constraints();
        let (xl, xu) = nlp.variable_bounds();
        let (cl, cu) = nlp.constraint_bounds();
        if xl.len() != n || xu.len() != n || cl.len() != m || cu.len() != m {
            return Err(Error::Dimension("bound vectors do not match problem size".into()));
        }
        check_bounds("variable", &xl, &xu)?;
        check_bounds("constraint", &cl, &cu)?;

        let jac = nlp.jacobian_structure();
        let mut row_cols = vec![Vec::new(); m];
        for &(r, c) in &jac {
            if r >= m || c >= n {
                return Err(Error::Dimension(format!("jacobian entry ({r}, {c}) out of range")));
            }
            row_cols[r].push(c);
        }
        for cols in &mut row_cols {
            cols.sort_unstable();
            cols.dedup();
        }
        let mut row_start = vec![0; m + 1];
        for r in 0..m {
            row_start[r + 1] = row_start[r] + row_cols[r].len();
        }
        let entry_slot = jac
            .iter()
            .map(|&(r, c)| row_start[r] + row_cols[r].binary_search(&c).expect("column present"))
            .collect();

        let hess = nlp.hessian_structure();
        let mut hbw = 0;
        for &(r, c) in &hess {
            if r >= n || c > r {
                return Err(Error::Dimension(format!("hessian entry ({r}, {c}) not in the lower triangle")));
            }
            hbw = hbw.max(r - c);
        }
        let span = |cols: &Vec<usize>| cols.last().map_or(0, |&hi| hi - cols[0]);
        let dense: Vec<bool> = row_cols
            .iter()
            .map(|cols| {
                let s = span(cols);
                s > DENSE_ROW_SPAN && s > 4 * (hbw + 1)
            })
            .collect();
        let bw = row_cols.iter().zip(&dense).filter(|(_, &d)| !d).map(|(c, _)| span(c)).fold(hbw, usize::max);

        let fd = match mode {
            DerivativeMode::Analytic => None,
            DerivativeMode::SparseFiniteDifference => {
                Some((colour_columns(n, &jac), colour_columns(n, &symmetric_pattern(n, &hess))))
            }
        };
        Ok(Self { n, m, xl, xu, cl, cu, jac, row_cols, row_start, entry_slot, dense, hess, bw, fd })
    }

    fn penalised(&self, i: usize, d: f64) -> bool {
        d != 0.0 || self.cl[i] == self.cu[i]
    }
}

fn check_bounds(what: &'static str, lo: &[f64], hi: &[f64]) -> Result<()> {
    for (index, (&lower, &upper)) in lo.iter().zip(hi).enumerate() {
        if !(lower <= upper) {
            return Err(Error::InconsistentBounds { what, index, lower, upper });
        }
    }
    Ok(())
}

struct Evaluator<'a> {
    nlp: &'a dyn Nlp,
    lay: &'a Layout,
}

impl Evaluator<'_> {
    fn jacobian(&self, x: &[f64], values: &mut [f64]) {
        match &self.lay.fd {
            None => self.nlp.jacobian_values(x, values),
            Some((jc, _)) => {
                sparse_fd_jacobian(|x, c| self.nlp.constraints(x, c), x, self.lay.m, &self.lay.jac, jc, values)
            }
        }
    }

    fn hessian(&self, x: &[f64], lambda: &[f64], values: &mut [f64]) {
        match &self.lay.fd {
            None => self.nlp.hessian_values(x, 1.0, lambda, values),
            Some((_, hc)) => {
                let grad = |x: &[f64], g: &mut [f64]| {
                    let mut jv = vec![0.0; self.lay.jac.len()];
                    self.jacobian(x, &mut jv);
                    self.nlp.objective_gradient(x, g);
                    for (&(r, c), v) in self.lay.jac.iter().zip(&jv) {
                        g[c] += lambda[r] * v;
                    }
                };
                sparse_fd_hessian(grad, x, &self.lay.hess, hc, values)
            }
        }
    }
}

/// Point of the augmented-Lagrangian subproblem with everything needed for
/// a Newton step.
struct Point {
    x: Vec<f64>,
    f: f64,
    c: Vec<f64>,
    phi: f64,
    lam_hat: Vec<f64>,
}

fn merit(lay: &Layout, f: f64, c: &[f64], lam: &[f64], mu: f64, lam_hat: Option<&mut Vec<f64>>) -> f64 {
    let mut pen = 0.0;
    let mut out = lam_hat;
    for i in 0..lay.m {
        let z = c[i] + lam[i] / mu;
        let d = z - z.clamp(lay.cl[i], lay.cu[i]);
        pen += d * d - (lam[i] / mu).powi(2);
        if let Some(h) = out.as_deref_mut() {
            h[i] = mu * d;
        }
    }
    f + 0.5 * mu * pen
}

fn first_non_finite(v: &[f64]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}

struct Inner {
    iterations: usize,
    kkt: f64,
    stalled: bool,
}

struct Workspace {
    jv: Vec<f64>,
    hv: Vec<f64>,
    g: Vec<f64>,
    delta: f64,
}

fn failure(msg: String) -> std::result::Result<Inner, String> {
    Err(msg)
}

/// Minimises the augmented Lagrangian for fixed `(lam, mu)` over the box
/// down to projected-gradient norm `omega`.
fn subproblem(
    ev: &Evaluator,
    p: &mut Point,
    lam: &[f64],
    mu: f64,
    omega: f64,
    max_inner: usize,
    ws: &mut Workspace,
) -> std::result::Result<Inner, String> {
    let lay = ev.lay;
    let n = lay.n;
    p.phi = merit(lay, p.f, &p.c, lam, mu, Some(&mut p.lam_hat));
    let mut iterations = 0;
    let mut flat_steps = 0;
    let mut row_vals = vec![0.0; *lay.row_start.last().unwrap_or(&0)];
    let mut trial_c = vec![0.0; lay.m];
    loop {
        ev.jacobian(&p.x, &mut ws.jv);
        ev.nlp.objective_gradient(&p.x, &mut ws.g);
        if let Some(j) = first_non_finite(&ws.g) {
            return failure(format!("non-finite objective gradient at variable {j}"));
        }
        for (e, &(r, c)) in lay.jac.iter().enumerate() {
            ws.g[c] += p.lam_hat[r] * ws.jv[e];
        }
        if let Some(j) = first_non_finite(&ws.g) {
            return failure(format!("non-finite constraint jacobian in column of variable {j}"));
        }
        let kkt = projected_gradient_norm(&p.x, &ws.g, &lay.xl, &lay.xu);
        if kkt <= omega || iterations >= max_inner || flat_steps >= STALL_STEPS {
            return Ok(Inner { iterations, kkt, stalled: flat_steps >= STALL_STEPS });
        }
        iterations += 1;

        // epsilon-active set
        let eps = ACTIVE_EPS.min(kkt);
        let active: Vec<bool> = (0..n)
            .map(|i| {
                let (x, l, u, g) = (p.x[i], lay.xl[i], lay.xu[i], ws.g[i]);
                l == u || (x <= l + eps && g > 0.0) || (x >= u - eps && g < 0.0)
            })
            .collect();

        // band part of the Newton matrix
        ev.hessian(&p.x, &p.lam_hat, &mut ws.hv);
        if let Some(e) = first_non_finite(&ws.hv) {
            return failure(format!("non-finite hessian entry at variable {}", lay.hess[e].0));
        }
        let mut band = SymBand::zeros(n, lay.bw);
        for (&(r, c), &v) in lay.hess.iter().zip(&ws.hv) {
            band.add(r, c, v);
        }
        row_vals.iter_mut().for_each(|v| *v = 0.0);
        for (e, &slot) in lay.entry_slot.iter().enumerate() {
            row_vals[slot] += ws.jv[e];
        }
        let mut dense_cols: Vec<Vec<f64>> = Vec::new();
        for i in 0..lay.m {
            if !lay.penalised(i, p.lam_hat[i]) {
                continue;
            }
            let cols = &lay.row_cols[i];
            let vals = &row_vals[lay.row_start[i]..lay.row_start[i + 1]];
            if lay.dense[i] {
                let mut u = vec![0.0; n];
                for (&c, &v) in cols.iter().zip(vals) {
                    if !active[c] {
                        u[c] = mu.sqrt() * v;
                    }
                }
                dense_cols.push(u);
            } else {
                for a in 0..cols.len() {
                    for b in 0..=a {
                        band.add(cols[a], cols[b], mu * vals[a] * vals[b]);
                    }
                }
            }
        }
        let mut diag_scale: f64 = 1.0;
        for i in 0..n {
            if active[i] {
                band.isolate(i);
            } else {
                diag_scale = diag_scale.max(band.diagonal(i).abs());
            }
        }
        let delta_min = 1e-12 * diag_scale;

        let rhs: Vec<f64> = (0..n).map(|i| if active[i] { 0.0 } else { -ws.g[i] }).collect();
        let mut accepted = false;
        while !accepted {
            // regularised factorisation
            let (chol, delta) = loop {
                let mut b = band.clone();
                if ws.delta > 0.0 {
                    for i in 0..n {
                        if !active[i] {
                            b.add(i, i, ws.delta);
                        }
                    }
                }
                match b.cholesky() {
                    Ok(ch) => break (ch, ws.delta),
                    Err(_) => {
                        ws.delta = (ws.delta * 10.0).max(delta_min.max(1e-8));
                        if ws.delta > 1e30 || !ws.delta.is_finite() {
                            return failure("newton matrix cannot be regularised".into());
                        }
                    }
                }
            };
            let mut d = rhs.clone();
            chol.solve_in_place(&mut d);
            if !dense_cols.is_empty() {
                woodbury(&chol, &dense_cols, &mut d);
            }
            for i in 0..n {
                if active[i] {
                    d[i] = -ws.g[i];
                }
            }

            let slope: f64 = (0..n).filter(|&i| !active[i]).map(|i| ws.g[i] * d[i]).sum();
            let mut t = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let xt: Vec<f64> = (0..n).map(|i| (p.x[i] + t * d[i]).clamp(lay.xl[i], lay.xu[i])).collect();
                let ft = ev.nlp.objective(&xt);
                ev.nlp.constraints(&xt, &mut trial_c);
                if ft.is_finite() && first_non_finite(&trial_c).is_none() {
                    let phit = merit(lay, ft, &trial_c, lam, mu, None);
                    let bound_part: f64 =
                        (0..n).filter(|&i| active[i]).map(|i| ws.g[i] * (p.x[i] - xt[i])).sum();
                    let decrease = -t * slope + bound_part;
                    // below the rounding level of phi the Newton step is
                    // taken on the model's word
                    let floor = 1e3 * f64::EPSILON * p.phi.abs().max(1.0);
                    let in_noise = t == 1.0 && -0.5 * slope + bound_part < floor && phit <= p.phi + floor;
                    if phit <= p.phi - ARMIJO * decrease || in_noise {
                        let moved = p.x.iter().zip(&xt).any(|(a, b)| (a - b).abs() > 4.0 * f64::EPSILON * (1.0 + a.abs()));
                        if !moved {
                            flat_steps += 1;
                        } else {
                            flat_steps = 0;
                        }
                        p.x = xt;
                        p.f = ft;
                        std::mem::swap(&mut p.c, &mut trial_c);
                        p.phi = merit(lay, p.f, &p.c, lam, mu, Some(&mut p.lam_hat));
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted {
                ws.delta = if delta > delta_min { delta / 10.0 } else { 0.0 };
            } else {
                ws.delta = (delta * 100.0).max(delta_min.max(1e-6) * 1e3);
                if ws.delta > 1e20 * diag_scale {
                    // no descent available at working precision
                    return Ok(Inner { iterations, kkt, stalled: true });
                }
            }
        }
    }
}

/// Applies `(B + U U^T)^{-1}` given `y = B^{-1} r` in `d`.
fn woodbury(chol: &super::band::BandCholesky, u: &[Vec<f64>], d: &mut [f64]) {
    let k = u.len();
    let w: Vec<Vec<f64>> = u
        .iter()
        .map(|col| {
            let mut v = col.clone();
            chol.solve_in_place(&mut v);
            v
        })
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let s = DMatrix::from_fn(k, k, |i, j| dot(&u[i], &w[j]) + if i == j { 1.0 } else { 0.0 });
    let r = DVector::from_fn(k, |i, _| dot(&u[i], d));
    let z = match s.clone().cholesky() {
        Some(ch) => ch.solve(&r),
        None => s.lu().solve(&r).unwrap_or_else(|| DVector::zeros(k)),
    };
    for (j, wj) in w.iter().enumerate() {
        for (di, wi) in d.iter_mut().zip(wj) {
            *di -= z[j] * wi;
        }
    }
}

/// Solves `nlp` from `x0` (projected onto the variable bounds).
///
/// Returns an error only for malformed input (wrong lengths, inconsistent
/// bounds, invalid options); solver outcomes, including numeric failure,
/// are reported through [`SolveReport::status`].
pub fn solve(nlp: &dyn Nlp, x0: &[f64], opts: &SolverOptions) -> Result<Solution> {
    let start = Instant::now();
    opts.validate()?;
    let lay = Layout::new(nlp, opts.derivative_mode)?;
    if x0.len() != lay.n {
        return Err(Error::Dimension(format!("x0 has length {}, expected {}", x0.len(), lay.n)));
    }
    let ev = Evaluator { nlp, lay: &lay };
    let (n, m) = (lay.n, lay.m);

    let mut report = SolveReport {
        status: SolveStatus::MaxIter,
        iterations: 0,
        inner_iterations: 0,
        final_objective: f64::NAN,
        max_constraint_violation: f64::NAN,
        kkt_residual: f64::NAN,
        wall_time: Default::default(),
        final_penalty: opts.penalty_init,
        message: None,
        trace: Vec::new(),
    };
    let finish = |mut report: SolveReport, x: Vec<f64>, multipliers: Vec<f64>| {
        report.wall_time = start.elapsed();
        Ok(Solution { x, multipliers, report })
    };

    if let Some(j) = first_non_finite(x0) {
        report.status = SolveStatus::NumericFailure;
        report.message = Some(format!("non-finite initial value at variable {j}"));
        return finish(report, x0.to_vec(), vec![0.0; m]);
    }
    let x: Vec<f64> = (0..n).map(|i| x0[i].clamp(lay.xl[i], lay.xu[i])).collect();
    let f = nlp.objective(&x);
    let mut c = vec![0.0; m];
    nlp.constraints(&x, &mut c);
    let bad = if !f.is_finite() {
        Some("non-finite objective at the initial point".to_string())
    } else {
        first_non_finite(&c).map(|i| format!("non-finite constraint {i} at the initial point"))
    };
    if let Some(msg) = bad {
        report.status = SolveStatus::NumericFailure;
        report.message = Some(msg);
        return finish(report, x, vec![0.0; m]);
    }

    let mut p = Point { x, f, c, phi: 0.0, lam_hat: vec![0.0; m] };
    let mut ws = Workspace { jv: vec![0.0; lay.jac.len()], hv: vec![0.0; lay.hess.len()], g: vec![0.0; n], delta: 0.0 };
    let mut lam = vec![0.0; m];
    let mut mu = opts.penalty_init;
    let mut omega = (1.0 / mu).max(opts.optimality_tol);
    let mut eta = mu.powf(-0.1).max(opts.feasibility_tol);

    let mut stalls = 0;
    for iter in 1..=opts.max_iterations {
        report.iterations = iter;
        let max_inner = match opts.inner_budget {
            Some(b) => opts.max_inner_iterations.min(b.saturating_sub(report.inner_iterations)),
            None => opts.max_inner_iterations,
        };
        if max_inner == 0 {
            report.message = Some("inner iteration budget exhausted".into());
            break;
        }
        let inner = match subproblem(&ev, &mut p, &lam, mu, omega, max_inner, &mut ws) {
            Ok(v) => v,
            Err(msg) => {
                report.status = SolveStatus::NumericFailure;
                report.message = Some(msg);
                break;
            }
        };
        report.inner_iterations += inner.iterations;
        let v = max_violation(&p.c, &lay.cl, &lay.cu);
        report.final_objective = p.f;
        report.max_constraint_violation = v;
        report.kkt_residual = inner.kkt;
        report.final_penalty = mu;
        report.trace.push(TraceRow {
            iter,
            objective: p.f,
            violation: v,
            kkt: inner.kkt,
            penalty: mu,
            inner_iterations: inner.iterations,
        });
        if v <= opts.feasibility_tol && inner.kkt <= opts.optimality_tol {
            report.status = SolveStatus::Converged;
            break;
        }
        stalls = if inner.stalled { stalls + 1 } else { 0 };
        if stalls >= STALL_STEPS {
            report.message = Some("no progress at working precision".into());
            break;
        }
        if v <= eta {
            lam.copy_from_slice(&p.lam_hat);
            eta = (eta / mu.powf(0.9)).max(opts.feasibility_tol);
            omega = (omega / mu).max(opts.optimality_tol);
        } else {
            mu *= opts.penalty_growth;
            if mu > PENALTY_CAP {
                report.status = SolveStatus::Infeasible;
                report.message = Some(format!("penalty exceeded {PENALTY_CAP:e} with violation {v:e}"));
                break;
            }
            eta = mu.powf(-0.1).max(opts.feasibility_tol);
            omega = (1.0 / mu).max(opts.optimality_tol);
        }
    }
    let multipliers = p.lam_hat.clone();
    finish(report, p.x, multipliers)
}
