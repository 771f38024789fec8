//! Discretize-then-optimize: the field-control problem for the Gaussian
//! wavepacket as a sparse nonlinear program.
//!
//! The continuous problem is
//!
//! ```text
//!   min  -|<psi(tf)|phi_t>|^2 + int_t0^tf kappa E^2 / s(t) - eta p0^2 / (2m) dt
//!   s.t. da/dt = f(a, E),  a(t0) = a_i,  int_t0^tf E dt = 0
//! ```
//!
//! with `s(t) = sin^2(pi (t - t0) / (tf - t0)) + epsilon`. On a uniform mesh
//! the dynamics become trapezoidal or compressed Hermite-Simpson defects and
//! the integrals use the matching quadrature (trapezoid or Simpson).
//!
//! NLP variables are ordered node by node, `(alpha, beta, x0, p0, E)` per
//! node plus the Hermite-Simpson midpoint control after each node but the
//! last, and divided by fixed scales, so the Jacobian and Hessian are banded
//! apart from the single net-force row.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{Dual2, Real};
use crate::dynamics::{rk4_step, FieldSignal, GaussianModel, Interpolation, RhsDerivatives};
use crate::error::{Error, Result};
use crate::nlp::{self, Nlp, SolveReport, SolverOptions};
use crate::potential::{
    gaussian_overlap, overlap_generic, AveragedPotential, GaussianState, GaussianSumPotential, QuarticDoubleWell,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Trapezoidal,
    #[default]
    HermiteSimpson,
}

/// Uniform time mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    scheme: Scheme,
    node_times: Vec<f64>,
}

impl Mesh {
    pub fn new(scheme: Scheme, n_nodes: usize, t0: f64, tf: f64) -> Result<Self> {
        if n_nodes < 3 {
            return Err(Error::InvalidProblem(format!("mesh needs at least 3 nodes, got {n_nodes}")));
        }
        if !(tf > t0) {
            return Err(Error::InvalidProblem(format!("final time {tf} must exceed start {t0}")));
        }
        let h = (tf - t0) / (n_nodes - 1) as f64;
        let mut node_times: Vec<f64> = (0..n_nodes).map(|k| t0 + k as f64 * h).collect();
        node_times[n_nodes - 1] = tf;
        Ok(Self { scheme, node_times })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn n_nodes(&self) -> usize {
        self.node_times.len()
    }

    pub fn node_times(&self) -> &[f64] {
        &self.node_times
    }

    pub fn step(&self) -> f64 {
        (self.node_times[self.n_nodes() - 1] - self.node_times[0]) / (self.n_nodes() - 1) as f64
    }
}

/// Per-component `(lower, upper)` state bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBounds {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub x0: (f64, f64),
    pub p0: (f64, f64),
}

impl StateBounds {
    /// Generous boxes: `x0` within four barrier distances of the origin.
    /// `alpha` stays above 0.05 a0^-2 (widths below about 2 a0); broader
    /// packets put the collocation equations near their Riccati blow-up.
    pub fn generous(barrier_distance: f64) -> Self {
        Self {
            alpha: (0.05, 1e3),
            beta: (-1e3, 1e3),
            x0: (-4.0 * barrier_distance, 4.0 * barrier_distance),
            p0: (-1e3, 1e3),
        }
    }

    pub fn as_array(&self) -> [(f64, f64); 4] {
        [self.alpha, self.beta, self.x0, self.p0]
    }
}

/// Divisors applied to variables before they reach the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    /// `(alpha, beta, x0, p0)`.
    pub state: [f64; 4],
    /// Field scale; `None` uses the larger field-bound magnitude.
    pub field: Option<f64>,
}

impl Scaling {
    pub fn for_barrier(barrier_distance: f64) -> Self {
        Self { state: [10.0, 10.0, barrier_distance, 50.0], field: None }
    }
}

/// Everything that defines one optimal control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlProblem {
    pub model: GaussianModel,
    pub s_init: GaussianState,
    pub s_target: GaussianState,
    pub t0: f64,
    pub tf: f64,
    /// Field penalty.
    pub kappa: f64,
    /// Floor of the shape function.
    pub epsilon: f64,
    /// Kinetic-energy reward, 0 disables it.
    pub eta: f64,
    pub field_bounds: (f64, f64),
    pub state_bounds: StateBounds,
    pub scaling: Scaling,
}

impl ControlProblem {
    /// Transfer from the left-well to the right-well harmonic ground state of
    /// `well` over `[0, tf]` with the reference Gaussian-sum potential,
    /// `kappa = 0.3`, `epsilon = 0.005`, `eta = 0` and fields within 0.05.
    pub fn well_transfer(well: &QuarticDoubleWell, tf: f64) -> Self {
        let xb = well.barrier_distance;
        Self {
            model: GaussianModel {
                potential: AveragedPotential::GaussianSum(GaussianSumPotential::reference(well)),
                mass: well.mass,
                charge: well.charge,
            },
            s_init: well.harmonic_ground_state(-xb),
            s_target: well.harmonic_ground_state(xb),
            t0: 0.0,
            tf,
            kappa: 0.3,
            epsilon: 0.005,
            eta: 0.0,
            field_bounds: (-0.05, 0.05),
            state_bounds: StateBounds::generous(xb),
            scaling: Scaling::for_barrier(xb),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProblem(m));
        if !(self.tf > self.t0) {
            return bad(format!("final time {} must exceed start {}", self.tf, self.t0));
        }
        if !(self.kappa >= 0.0) || !(self.eta >= 0.0) || !(self.epsilon > 0.0) {
            return bad("need kappa >= 0, eta >= 0 and epsilon > 0".into());
        }
        if !(self.s_init.alpha > 0.0) || !(self.s_target.alpha > 0.0) {
            return bad("initial and target states need alpha > 0".into());
        }
        if !(self.model.mass > 0.0) {
            return bad("mass must be positive".into());
        }
        let (lo, hi) = self.field_bounds;
        if !(lo <= hi) {
            return Err(Error::InconsistentBounds { what: "field", index: 0, lower: lo, upper: hi });
        }
        for (index, (lo, hi)) in self.state_bounds.as_array().into_iter().enumerate() {
            if !(lo <= hi) {
                return Err(Error::InconsistentBounds { what: "state", index, lower: lo, upper: hi });
            }
        }
        if self.scaling.state.iter().chain(self.scaling.field.iter()).any(|s| !(*s > 0.0)) {
            return bad("scales must be positive".into());
        }
        if !(self.field_scale() > 0.0) {
            return bad("field bounds are both zero; give an explicit field scale".into());
        }
        Ok(())
    }

    pub fn field_scale(&self) -> f64 {
        self.scaling.field.unwrap_or(self.field_bounds.0.abs().max(self.field_bounds.1.abs()))
    }

    /// Shape function `s(t)`.
    pub fn shape(&self, t: f64) -> f64 {
        let u = (PI * (t - self.t0) / (self.tf - self.t0)).sin();
        u * u + self.epsilon
    }
}

/// Running cost `kappa E^2 / s(t) - eta p0^2 / (2m)`.
pub fn running_cost(field: f64, p0: f64, t: f64, prob: &ControlProblem) -> f64 {
    prob.kappa * field * field / prob.shape(t) - prob.eta * p0 * p0 / (2.0 * prob.model.mass)
}

/// Terminal cost `-|<s_f|target>|^2`.
pub fn terminal_cost(s_f: &GaussianState, prob: &ControlProblem) -> f64 {
    -gaussian_overlap(s_f, &prob.s_target)
}

/// `s_{k+1} - s_k - h/2 (f_k + f_{k+1})`.
pub fn trapezoidal_defect(
    s_k: &GaussianState,
    s_k1: &GaussianState,
    e_k: f64,
    e_k1: f64,
    h: f64,
    model: &GaussianModel,
) -> [f64; 4] {
    let z = node_pair(s_k, e_k, s_k1, e_k1);
    trapezoid_interval(model, &z, h)
}

/// Compressed Hermite-Simpson defect with midpoint control `e_mid`.
pub fn hermite_simpson_defect(
    s_k: &GaussianState,
    s_k1: &GaussianState,
    e_k: f64,
    e_mid: f64,
    e_k1: f64,
    h: f64,
    model: &GaussianModel,
) -> [f64; 4] {
    let p = node_pair(s_k, e_k, s_k1, e_k1);
    let z: [f64; 11] = std::array::from_fn(|i| if i < 10 { p[i] } else { e_mid });
    hermite_simpson_interval(model, &z, h)
}

fn node_pair(s_k: &GaussianState, e_k: f64, s_k1: &GaussianState, e_k1: f64) -> [f64; 10] {
    [s_k.alpha, s_k.beta, s_k.x0, s_k.p0, e_k, s_k1.alpha, s_k1.beta, s_k1.x0, s_k1.p0, e_k1]
}

fn split<T: Real>(z: &[T]) -> ([T; 4], T, [T; 4], T) {
    ([z[0], z[1], z[2], z[3]], z[4], [z[5], z[6], z[7], z[8]], z[9])
}

// Interval functions over `z = (s_k, E_k, s_{k+1}, E_{k+1}[, E_mid])`,
// generic so tests can differentiate them directly.
fn trapezoid_interval<T: Real>(model: &GaussianModel, z: &[T], h: f64) -> [T; 4] {
    let (sk, ek, sk1, ek1) = split(z);
    let fk = model.rhs(sk, ek);
    let fk1 = model.rhs(sk1, ek1);
    std::array::from_fn(|i| sk1[i] - sk[i] - (fk[i] + fk1[i]) * (h / 2.0))
}

fn hs_midpoint<T: Real>(sk: [T; 4], sk1: [T; 4], fk: [T; 4], fk1: [T; 4], h: f64) -> [T; 4] {
    std::array::from_fn(|i| (sk[i] + sk1[i]) * 0.5 + (fk[i] - fk1[i]) * (h / 8.0))
}

fn hermite_simpson_interval<T: Real>(model: &GaussianModel, z: &[T], h: f64) -> [T; 4] {
    let (sk, ek, sk1, ek1) = split(z);
    let fk = model.rhs(sk, ek);
    let fk1 = model.rhs(sk1, ek1);
    let sm = hs_midpoint(sk, sk1, fk, fk1, h);
    let fm = model.rhs(sm, z[10]);
    std::array::from_fn(|i| sk1[i] - sk[i] - (fk[i] + fm[i] * 4.0 + fk1[i]) * (h / 6.0))
}

// Running-cost quadrature over one interval (node terms carry the
// end-point weight of that interval only).
fn interval_cost<T: Real>(prob: &ControlProblem, scheme: Scheme, z: &[T], t: f64, h: f64) -> T {
    let r = |e: T, p: T, t: f64| e * e * (prob.kappa / prob.shape(t)) - p * p * (prob.eta / (2.0 * prob.model.mass));
    let (sk, ek, sk1, ek1) = split(z);
    match scheme {
        Scheme::Trapezoidal => (r(ek, sk[3], t) + r(ek1, sk1[3], t + h)) * (h / 2.0),
        Scheme::HermiteSimpson => {
            let fk = prob.model.rhs(sk, ek);
            let fk1 = prob.model.rhs(sk1, ek1);
            let sm = hs_midpoint(sk, sk1, fk, fk1, h);
            (r(ek, sk[3], t) + r(ek1, sk1[3], t + h)) * (h / 6.0) + r(z[10], sm[3], t + h / 2.0) * (4.0 * h / 6.0)
        }
    }
}

/// Mesh values of states and field in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    /// `(alpha, beta, x0, p0, E)` for every node, node-major.
    pub nodes: Vec<f64>,
    /// Field at interval midpoints (Hermite-Simpson only, else empty).
    pub midpoint_controls: Vec<f64>,
}

impl DecisionVector {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len() / 5
    }

    pub fn state(&self, k: usize) -> GaussianState {
        GaussianState::from_array(self.state_array(k))
    }

    fn state_array(&self, k: usize) -> [f64; 4] {
        std::array::from_fn(|i| self.nodes[5 * k + i])
    }

    pub fn field(&self, k: usize) -> f64 {
        self.nodes[5 * k + 4]
    }

    pub fn fields(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| self.field(k)).collect()
    }

    pub fn final_state(&self) -> GaussianState {
        self.state(self.n_nodes() - 1)
    }

    fn check(&self, mesh: &Mesh) -> Result<()> {
        let mids = match mesh.scheme {
            Scheme::Trapezoidal => 0,
            Scheme::HermiteSimpson => mesh.n_nodes() - 1,
        };
        if self.nodes.len() != 5 * mesh.n_nodes() || self.midpoint_controls.len() != mids {
            return Err(Error::Dimension(format!(
                "decision vector has {} node values and {} midpoints; mesh needs {} and {}",
                self.nodes.len(),
                self.midpoint_controls.len(),
                5 * mesh.n_nodes(),
                mids
            )));
        }
        Ok(())
    }

    /// Field as a signal over the mesh, midpoints included as extra nodes.
    pub fn field_signal(&self, mesh: &Mesh, interpolation: Interpolation) -> Result<FieldSignal> {
        self.check(mesh)?;
        let t = mesh.node_times();
        let mut times = Vec::with_capacity(2 * t.len());
        let mut values = Vec::with_capacity(2 * t.len());
        for k in 0..t.len() {
            times.push(t[k]);
            values.push(self.field(k));
            if let Some(&em) = self.midpoint_controls.get(k) {
                times.push(0.5 * (t[k] + t[k + 1]));
                values.push(em);
            }
        }
        FieldSignal::new(times, values, interpolation)
    }

    /// Net force by the mesh's quadrature rule.
    pub fn net_force(&self, mesh: &Mesh) -> f64 {
        let h = mesh.step();
        (0..self.n_nodes() - 1)
            .map(|k| match mesh.scheme {
                Scheme::Trapezoidal => h / 2.0 * (self.field(k) + self.field(k + 1)),
                Scheme::HermiteSimpson => {
                    h / 6.0 * (self.field(k) + 4.0 * self.midpoint_controls[k] + self.field(k + 1))
                }
            })
            .sum()
    }

    /// CSV with columns `t, alpha, beta, x0, p0, E, E_mid` (empty `E_mid`
    /// at the last node and for trapezoidal meshes).
    pub fn write_csv<W: Write>(&self, mesh: &Mesh, out: W) -> Result<()> {
        self.check(mesh)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "alpha", "beta", "x0", "p0", "E", "E_mid"])?;
        for (k, t) in mesh.node_times().iter().enumerate() {
            let mut rec: Vec<String> = std::iter::once(*t).chain(self.nodes[5 * k..5 * k + 5].iter().copied()).map(fmt).collect();
            rec.push(self.midpoint_controls.get(k).map(|v| fmt(*v)).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads what [`DecisionVector::write_csv`] wrote, returning the node
    /// times alongside.
    pub fn read_csv<R: Read>(input: R) -> Result<(Vec<f64>, Self)> {
        let mut r = csv::Reader::from_reader(input);
        let mut times = Vec::new();
        let mut nodes = Vec::new();
        let mut mids = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 7 {
                return Err(Error::Parse(format!("expected 7 columns, found {}", rec.len())));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i].trim().parse().map_err(|_| Error::Parse(format!("bad number {:?}", &rec[i])))
            };
            times.push(num(0)?);
            for i in 1..6 {
                nodes.push(num(i)?);
            }
            if !rec[6].trim().is_empty() {
                mids.push(num(6)?);
            }
        }
        if times.len() < 2 {
            return Err(Error::Parse("solution needs at least two rows".into()));
        }
        Ok((times, Self { nodes, midpoint_controls: mids }))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// The transcribed problem.
#[derive(Debug, Clone)]
pub struct CollocationNlp {
    prob: ControlProblem,
    mesh: Mesh,
    stride: usize,
    // scales of (alpha, beta, x0, p0, E)
    scale: [f64; 5],
    jac_structure: Vec<(usize, usize)>,
    hess_structure: Vec<(usize, usize)>,
    // (variable, weight) of every field value in the net-force quadrature
    force_weights: Vec<(usize, f64)>,
}

/// Transcribes `prob` on `mesh`.
pub fn build_nlp(prob: &ControlProblem, mesh: &Mesh) -> Result<CollocationNlp> {
    prob.validate()?;
    let t = mesh.node_times();
    if (t[0] - prob.t0).abs() > 1e-9 * (prob.tf - prob.t0) || (t[t.len() - 1] - prob.tf).abs() > 1e-9 * (prob.tf - prob.t0)
    {
        return Err(Error::InvalidProblem("mesh does not span the problem horizon".into()));
    }
    let stride = match mesh.scheme {
        Scheme::Trapezoidal => 5,
        Scheme::HermiteSimpson => 6,
    };
    let s = prob.scaling.state;
    let mut nlp = CollocationNlp {
        prob: prob.clone(),
        mesh: mesh.clone(),
        stride,
        scale: [s[0], s[1], s[2], s[3], prob.field_scale()],
        jac_structure: Vec::new(),
        hess_structure: Vec::new(),
        force_weights: Vec::new(),
    };
    nlp.build_structures();
    Ok(nlp)
}

impl CollocationNlp {
    pub fn problem(&self) -> &ControlProblem {
        &self.prob
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    fn n_intervals(&self) -> usize {
        self.n_nodes() - 1
    }

    fn h(&self) -> f64 {
        self.mesh.step()
    }

    fn var(&self, k: usize, j: usize) -> usize {
        self.stride * k + j
    }

    fn mid_var(&self, k: usize) -> usize {
        self.stride * k + 5
    }

    fn hs(&self) -> bool {
        self.mesh.scheme == Scheme::HermiteSimpson
    }

    // NLP index and scale of every entry of an interval's z
    fn interval_vars(&self, k: usize) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = (0..10).map(|a| (self.var(k + a / 5, a % 5), self.scale[a % 5])).collect();
        if self.hs() {
            v.push((self.mid_var(k), self.scale[4]));
        }
        v
    }

    fn build_structures(&mut self) {
        let mut jac = Vec::new();
        for j in 0..4 {
            jac.push((j, self.var(0, j)));
        }
        let mut hess = Vec::new();
        for k in 0..self.n_intervals() {
            let vars = self.interval_vars(k);
            for i in 0..4 {
                for &(c, _) in &vars {
                    jac.push((4 + 4 * k + i, c));
                }
            }
            for &(a, _) in &vars {
                for &(b, _) in &vars {
                    if a >= b {
                        hess.push((a, b));
                    }
                }
            }
        }
        let last = self.n_nodes() - 1;
        for a in 0..4 {
            for b in 0..=a {
                hess.push((self.var(last, a), self.var(last, b)));
            }
        }
        let h = self.h();
        let row = 4 + 4 * self.n_intervals();
        let mut weights = vec![0.0; self.num_variables()];
        for k in 0..self.n_intervals() {
            let (w_end, w_mid) = if self.hs() { (h / 6.0, 4.0 * h / 6.0) } else { (h / 2.0, 0.0) };
            weights[self.var(k, 4)] += w_end;
            weights[self.var(k + 1, 4)] += w_end;
            if self.hs() {
                weights[self.mid_var(k)] += w_mid;
            }
        }
        for (v, w) in weights.iter().enumerate() {
            if *w != 0.0 {
                self.force_weights.push((v, *w));
                jac.push((row, v));
            }
        }
        self.jac_structure = jac;
        self.hess_structure = hess;
    }

    /// Solver vector for `dv`.
    pub fn to_nlp(&self, dv: &DecisionVector) -> Result<Vec<f64>> {
        dv.check(&self.mesh)?;
        let mut y = vec![0.0; self.num_variables()];
        for k in 0..self.n_nodes() {
            for j in 0..5 {
                y[self.var(k, j)] = dv.nodes[5 * k + j] / self.scale[j];
            }
        }
        for (k, em) in dv.midpoint_controls.iter().enumerate() {
            y[self.mid_var(k)] = em / self.scale[4];
        }
        Ok(y)
    }

    /// Physical decision vector for solver vector `y`.
    pub fn decision_vector(&self, y: &[f64]) -> DecisionVector {
        let mut nodes = vec![0.0; 5 * self.n_nodes()];
        for k in 0..self.n_nodes() {
            for j in 0..5 {
                nodes[5 * k + j] = y[self.var(k, j)] * self.scale[j];
            }
        }
        let midpoint_controls =
            if self.hs() { (0..self.n_intervals()).map(|k| y[self.mid_var(k)] * self.scale[4]).collect() } else { vec![] };
        DecisionVector { nodes, midpoint_controls }
    }

    fn node(&self, y: &[f64], k: usize) -> ([f64; 4], f64) {
        (std::array::from_fn(|j| y[self.var(k, j)] * self.scale[j]), y[self.var(k, 4)] * self.scale[4])
    }

    fn z(&self, y: &[f64], k: usize) -> Vec<f64> {
        self.interval_vars(k).iter().map(|&(v, s)| y[v] * s).collect()
    }

    fn node_derivatives(&self, y: &[f64]) -> Vec<RhsDerivatives> {
        (0..self.n_nodes())
            .map(|k| {
                let (s, e) = self.node(y, k);
                self.prob.model.rhs_derivatives(s, e)
            })
            .collect()
    }

    /// Defects of every interval in physical units, unscaled.
    pub fn defects(&self, y: &[f64]) -> Vec<[f64; 4]> {
        let h = self.h();
        let rhs: Vec<[f64; 4]> = (0..self.n_nodes())
            .map(|k| {
                let (s, e) = self.node(y, k);
                self.prob.model.rhs(s, e)
            })
            .collect();
        (0..self.n_intervals())
            .map(|k| {
                let (sk, _) = self.node(y, k);
                let (sk1, _) = self.node(y, k + 1);
                let (fk, fk1) = (rhs[k], rhs[k + 1]);
                if self.hs() {
                    let sm = hs_midpoint(sk, sk1, fk, fk1, h);
                    let fm = self.prob.model.rhs(sm, y[self.mid_var(k)] * self.scale[4]);
                    std::array::from_fn(|i| sk1[i] - sk[i] - h / 6.0 * (fk[i] + 4.0 * fm[i] + fk1[i]))
                } else {
                    std::array::from_fn(|i| sk1[i] - sk[i] - h / 2.0 * (fk[i] + fk1[i]))
                }
            })
            .collect()
    }

    // Midpoint state, its gradient in z (4 x 11) and the midpoint rhs
    // derivatives.
    fn midpoint_parts(&self, d: &[RhsDerivatives], y: &[f64], k: usize) -> ([[f64; 11]; 4], RhsDerivatives) {
        let h = self.h();
        let (sk, _) = self.node(y, k);
        let (sk1, _) = self.node(y, k + 1);
        let sm = hs_midpoint(sk, sk1, d[k].value, d[k + 1].value, h);
        let mut grad = [[0.0; 11]; 4];
        for i in 0..4 {
            grad[i][i] += 0.5;
            grad[i][5 + i] += 0.5;
            for a in 0..5 {
                grad[i][a] += h / 8.0 * d[k].jacobian[i][a];
                grad[i][5 + a] -= h / 8.0 * d[k + 1].jacobian[i][a];
            }
        }
        let em = y[self.mid_var(k)] * self.scale[4];
        (grad, self.prob.model.rhs_derivatives(sm, em))
    }

    fn time(&self, k: usize) -> f64 {
        self.mesh.node_times()[k]
    }

    /// Largest defect over the mesh after dividing by the state scales.
    pub fn max_scaled_defect(&self, dv: &DecisionVector) -> Result<f64> {
        let y = self.to_nlp(dv)?;
        Ok(self
            .defects(&y)
            .iter()
            .flat_map(|d| (0..4).map(move |i| (d[i] / self.scale[i]).abs()))
            .fold(0.0, f64::max))
    }
}

impl Nlp for CollocationNlp {
    fn num_variables(&self) -> usize {
        self.stride * self.n_nodes() - (self.stride - 5)
    }

    fn num_constraints(&self) -> usize {
        4 * self.n_intervals() + 5
    }

    fn variable_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_variables();
        let (mut lo, mut hi) = (vec![0.0; n], vec![0.0; n]);
        let sb = self.prob.state_bounds.as_array();
        let a_i = self.prob.s_init.to_array();
        for k in 0..self.n_nodes() {
            for j in 0..4 {
                let v = self.var(k, j);
                if k == 0 {
                    lo[v] = a_i[j] / self.scale[j];
                    hi[v] = lo[v];
                } else {
                    lo[v] = sb[j].0 / self.scale[j];
                    hi[v] = sb[j].1 / self.scale[j];
                }
            }
        }
        let (el, eu) = self.prob.field_bounds;
        for &(v, _) in &self.force_weights {
            lo[v] = el / self.scale[4];
            hi[v] = eu / self.scale[4];
        }
        (lo, hi)
    }

    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.num_constraints();
        let mut b = vec![0.0; m];
        let a_i = self.prob.s_init.to_array();
        for j in 0..4 {
            b[j] = a_i[j] / self.scale[j];
        }
        (b.clone(), b)
    }

    fn objective(&self, y: &[f64]) -> f64 {
        let h = self.h();
        let (sf, _) = self.node(y, self.n_nodes() - 1);
        let mut total = -overlap_generic(sf, &self.prob.s_target);
        for k in 0..self.n_intervals() {
            total += interval_cost(&self.prob, self.mesh.scheme, &self.z(y, k), self.time(k), h);
        }
        total
    }

    fn objective_gradient(&self, y: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        let h = self.h();
        let prob = &self.prob;
        let inv_m = 1.0 / prob.model.mass;
        let d = if self.hs() && prob.eta != 0.0 { self.node_derivatives(y) } else { Vec::new() };
        for k in 0..self.n_intervals() {
            let vars = self.interval_vars(k);
            let z = self.z(y, k);
            let w_end = if self.hs() { h / 6.0 } else { h / 2.0 };
            let mut gz = [0.0; 11];
            for (node, t) in [(0, self.time(k)), (5, self.time(k + 1))] {
                gz[node + 4] += w_end * 2.0 * prob.kappa * z[node + 4] / prob.shape(t);
                gz[node + 3] -= w_end * prob.eta * z[node + 3] * inv_m;
            }
            if self.hs() {
                let w_mid = 4.0 * h / 6.0;
                gz[10] += w_mid * 2.0 * prob.kappa * z[10] / prob.shape(self.time(k) + h / 2.0);
                if prob.eta != 0.0 {
                    let (grad_sm, _) = self.midpoint_parts(&d, y, k);
                    let pm = (z[3] + z[8]) * 0.5 + (d[k].value[3] - d[k + 1].value[3]) * h / 8.0;
                    for a in 0..11 {
                        gz[a] -= w_mid * prob.eta * pm * inv_m * grad_sm[3][a];
                    }
                }
            }
            for (a, &(v, s)) in vars.iter().enumerate() {
                g[v] += gz[a] * s;
            }
        }
        let last = self.n_nodes() - 1;
        let (sf, _) = self.node(y, last);
        let ov = overlap_generic(Dual2::<4>::variables(sf), &prob.s_target);
        for j in 0..4 {
            g[self.var(last, j)] -= ov.grad[j] * self.scale[j];
        }
    }

    fn constraints(&self, y: &[f64], out: &mut [f64]) {
        for j in 0..4 {
            out[j] = y[self.var(0, j)];
        }
        for (k, d) in self.defects(y).iter().enumerate() {
            for i in 0..4 {
                out[4 + 4 * k + i] = d[i] / self.scale[i];
            }
        }
        let last = self.num_constraints() - 1;
        out[last] = self.force_weights.iter().map(|&(v, w)| w * y[v] * self.scale[4]).sum();
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        self.jac_structure.clone()
    }

    fn jacobian_values(&self, y: &[f64], values: &mut [f64]) {
        let h = self.h();
        let d = self.node_derivatives(y);
        let mut e = 0;
        for _ in 0..4 {
            values[e] = 1.0;
            e += 1;
        }
        let w_f = if self.hs() { h / 6.0 } else { h / 2.0 };
        for k in 0..self.n_intervals() {
            let vars = self.interval_vars(k);
            let mid = if self.hs() { Some(self.midpoint_parts(&d, y, k)) } else { None };
            for i in 0..4 {
                let mut row = [0.0; 11];
                row[i] -= 1.0;
                row[5 + i] += 1.0;
                for a in 0..5 {
                    row[a] -= w_f * d[k].jacobian[i][a];
                    row[5 + a] -= w_f * d[k + 1].jacobian[i][a];
                }
                if let Some((grad_sm, fm)) = &mid {
                    let c = 4.0 * h / 6.0;
                    for a in 0..11 {
                        let mut dz = fm.jacobian[i][4] * if a == 10 { 1.0 } else { 0.0 };
                        for j in 0..4 {
                            dz += fm.jacobian[i][j] * grad_sm[j][a];
                        }
                        row[a] -= c * dz;
                    }
                }
                for (a, &(_, s)) in vars.iter().enumerate() {
                    values[e] = row[a] * s / self.scale[i];
                    e += 1;
                }
            }
        }
        for &(_, w) in &self.force_weights {
            values[e] = w * self.scale[4];
            e += 1;
        }
        debug_assert_eq!(e, values.len());
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        self.hess_structure.clone()
    }

    fn hessian_values(&self, y: &[f64], obj_factor: f64, lambda: &[f64], values: &mut [f64]) {
        let h = self.h();
        let prob = &self.prob;
        let inv_m = 1.0 / prob.model.mass;
        let d = self.node_derivatives(y);
        let w_f = if self.hs() { h / 6.0 } else { h / 2.0 };
        let w_end = w_f;
        let mut e = 0;
        for k in 0..self.n_intervals() {
            let vars = self.interval_vars(k);
            let nz = vars.len();
            let z = self.z(y, k);
            let c: [f64; 4] = std::array::from_fn(|i| lambda[4 + 4 * k + i] / self.scale[i]);
            let mut m = [[0.0; 11]; 11];
            // node rhs curvature
            for (off, dn) in [(0, &d[k]), (5, &d[k + 1])] {
                for i in 0..4 {
                    let ci = -w_f * c[i];
                    for a in 0..5 {
                        for b in 0..5 {
                            m[off + a][off + b] += ci * dn.hessian[i][a][b];
                        }
                    }
                }
            }
            // node running cost
            for (off, t) in [(0, self.time(k)), (5, self.time(k + 1))] {
                m[off + 4][off + 4] += obj_factor * w_end * 2.0 * prob.kappa / prob.shape(t);
                m[off + 3][off + 3] -= obj_factor * w_end * prob.eta * inv_m;
            }
            if self.hs() {
                let (grad_sm, fm) = self.midpoint_parts(&d, y, k);
                let w_mid = 4.0 * h / 6.0;
                let sigma = obj_factor * w_mid;
                let pm = (z[3] + z[8]) * 0.5 + (d[k].value[3] - d[k + 1].value[3]) * h / 8.0;
                let tm = self.time(k) + h / 2.0;
                // G(u) = sum_i -w_mid c_i f_m,i(u) + sigma R(u), u = (s_m, E_mid)
                let mut g_g = [0.0; 5];
                let mut h_g = [[0.0; 5]; 5];
                for i in 0..4 {
                    let ci = -w_mid * c[i];
                    for a in 0..5 {
                        g_g[a] += ci * fm.jacobian[i][a];
                        for b in 0..5 {
                            h_g[a][b] += ci * fm.hessian[i][a][b];
                        }
                    }
                }
                g_g[3] -= sigma * prob.eta * pm * inv_m;
                g_g[4] += sigma * 2.0 * prob.kappa * z[10] / prob.shape(tm);
                h_g[3][3] -= sigma * prob.eta * inv_m;
                h_g[4][4] += sigma * 2.0 * prob.kappa / prob.shape(tm);
                // Z: rows grad s_m,j and e_10
                let zrow = |j: usize, a: usize| -> f64 {
                    if j < 4 {
                        grad_sm[j][a]
                    } else if a == 10 {
                        1.0
                    } else {
                        0.0
                    }
                };
                let mut hz = [[0.0; 11]; 5];
                for j in 0..5 {
                    for a in 0..11 {
                        hz[j][a] = (0..5).map(|l| h_g[j][l] * zrow(l, a)).sum();
                    }
                }
                for a in 0..11 {
                    for b in 0..11 {
                        m[a][b] += (0..5).map(|j| zrow(j, a) * hz[j][b]).sum::<f64>();
                    }
                }
                // curvature of the midpoint state itself
                for j in 0..4 {
                    let gj = g_g[j] * h / 8.0;
                    for a in 0..5 {
                        for b in 0..5 {
                            m[a][b] += gj * d[k].hessian[j][a][b];
                            m[5 + a][5 + b] -= gj * d[k + 1].hessian[j][a][b];
                        }
                    }
                }
            }
            for a in 0..nz {
                for b in 0..nz {
                    if vars[a].0 >= vars[b].0 {
                        values[e] = m[a][b] * vars[a].1 * vars[b].1;
                        e += 1;
                    }
                }
            }
        }
        let last = self.n_nodes() - 1;
        let (sf, _) = self.node(y, last);
        let ov = overlap_generic(Dual2::<4>::variables(sf), &prob.s_target);
        for a in 0..4 {
            for b in 0..=a {
                values[e] = -obj_factor * ov.hess[a][b] * self.scale[a] * self.scale[b];
                e += 1;
            }
        }
        debug_assert_eq!(e, values.len());
    }
}

/// Substeps per interval of the reference integration in [`epsilon_disc`].
pub const EPSILON_DISC_SUBSTEPS: usize = 64;

/// Maximum relative local error: each interval is re-integrated from its
/// start state with RK4 under the scheme's own control interpolant (linear
/// for trapezoidal, quadratic through the midpoint for Hermite-Simpson) and
/// compared with the end state, per component relative to one plus the
/// largest magnitude of that component over the solution.
pub fn epsilon_disc(solution: &DecisionVector, prob: &ControlProblem, mesh: &Mesh) -> Result<f64> {
    solution.check(mesh)?;
    let n = mesh.n_nodes();
    let mut norm = [1.0f64; 4];
    for k in 0..n {
        let s = solution.state_array(k);
        for i in 0..4 {
            norm[i] = norm[i].max(1.0 + s[i].abs());
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..n - 1 {
        let end = integrate_interval(solution, prob, mesh, k)?;
        let target = solution.state_array(k + 1);
        for i in 0..4 {
            worst = worst.max((end[i] - target[i]).abs() / norm[i]);
        }
    }
    Ok(worst)
}

fn interval_control(solution: &DecisionVector, mesh: &Mesh, k: usize) -> impl Fn(f64) -> f64 {
    let t = mesh.node_times();
    let (ta, h) = (t[k], t[k + 1] - t[k]);
    let (ea, eb) = (solution.field(k), solution.field(k + 1));
    let em = solution.midpoint_controls.get(k).copied();
    move |tau: f64| {
        let u = (tau - ta) / h;
        match em {
            None => ea + (eb - ea) * u,
            // Lagrange quadratic through u = 0, 1/2, 1
            Some(em) => ea * (2.0 * u - 1.0) * (u - 1.0) + em * 4.0 * u * (1.0 - u) + eb * u * (2.0 * u - 1.0),
        }
    }
}

fn integrate_interval(solution: &DecisionVector, prob: &ControlProblem, mesh: &Mesh, k: usize) -> Result<[f64; 4]> {
    let t = mesh.node_times();
    let control = interval_control(solution, mesh, k);
    let dt = (t[k + 1] - t[k]) / EPSILON_DISC_SUBSTEPS as f64;
    let mut s = solution.state_array(k);
    for j in 0..EPSILON_DISC_SUBSTEPS {
        s = rk4_step(&prob.model, s, t[k] + j as f64 * dt, dt, |tau| Ok(control(tau)))?;
        if !(s[0] > 0.0) {
            return Err(Error::AnsatzBreakdown { t: t[k] + (j + 1) as f64 * dt, alpha: s[0] });
        }
    }
    Ok(s)
}

/// Decision vector whose node states are the reference integration of the
/// given node fields from `s_init`, interval by interval. Its `epsilon_disc`
/// vanishes by construction.
pub fn integrate_on_mesh(prob: &ControlProblem, mesh: &Mesh, fields: &[f64], midpoints: &[f64]) -> Result<DecisionVector> {
    let n = mesh.n_nodes();
    let mut dv = DecisionVector { nodes: vec![0.0; 5 * n], midpoint_controls: midpoints.to_vec() };
    if fields.len() != n {
        return Err(Error::Dimension(format!("{} fields for {n} nodes", fields.len())));
    }
    for k in 0..n {
        dv.nodes[5 * k + 4] = fields[k];
    }
    dv.check(mesh)?;
    dv.nodes[..4].copy_from_slice(&prob.s_init.to_array());
    for k in 0..n - 1 {
        let s = integrate_interval(&dv, prob, mesh, k)?;
        dv.nodes[5 * (k + 1)..5 * (k + 1) + 4].copy_from_slice(&s);
    }
    Ok(dv)
}

/// Seeded starting point: states move linearly from `s_init` to `s_target`
/// plus independent uniform noise of `amplitude` times each state scale,
/// fields are uniform noise of `amplitude` times the field scale with the
/// sample mean removed. Node 0 is `s_init` exactly and every value is
/// clipped to its bounds.
pub fn initial_guess(prob: &ControlProblem, mesh: &Mesh, seed: u64, amplitude: f64) -> DecisionVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mesh.n_nodes();
    let a = prob.s_init.to_array();
    let b = prob.s_target.to_array();
    let sb = prob.state_bounds.as_array();
    let scale = prob.scaling.state;
    let e_scale = prob.field_scale();
    let mut noise = |s: f64| if amplitude == 0.0 { 0.0 } else { amplitude * s * rng.random_range(-1.0..=1.0) };
    let mut nodes = vec![0.0; 5 * n];
    for k in 0..n {
        let u = k as f64 / (n - 1) as f64;
        for j in 0..4 {
            let v = a[j] + (b[j] - a[j]) * u + noise(scale[j]);
            nodes[5 * k + j] = if k == 0 { a[j] } else { v.clamp(sb[j].0, sb[j].1) };
        }
        nodes[5 * k + 4] = noise(e_scale);
    }
    let mut mids: Vec<f64> = match mesh.scheme {
        Scheme::Trapezoidal => vec![],
        Scheme::HermiteSimpson => (0..n - 1).map(|_| noise(e_scale)).collect(),
    };
    let count = (n + mids.len()) as f64;
    let mean = ((0..n).map(|k| nodes[5 * k + 4]).sum::<f64>() + mids.iter().sum::<f64>()) / count;
    let (el, eu) = prob.field_bounds;
    for k in 0..n {
        nodes[5 * k + 4] = (nodes[5 * k + 4] - mean).clamp(el, eu);
    }
    for m in &mut mids {
        *m = (*m - mean).clamp(el, eu);
    }
    DecisionVector { nodes, midpoint_controls: mids }
}

/// Transcribes, solves from `guess` and returns the solution with its report.
pub fn optimize(
    prob: &ControlProblem,
    mesh: &Mesh,
    guess: &DecisionVector,
    opts: &SolverOptions,
) -> Result<(DecisionVector, SolveReport)> {
    let nlp = build_nlp(prob, mesh)?;
    let y0 = nlp.to_nlp(guess)?;
    let sol = nlp::solve(&nlp, &y0, opts)?;
    Ok((nlp.decision_vector(&sol.x), sol.report))
}
