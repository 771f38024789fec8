//! Equations of motion for the Gaussian parameters under a time-dependent
//! field, and a fixed-step RK4 integrator for replaying fields.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dual::{Dual2, Real};
use crate::error::{Error, Result};
use crate::potential::{AveragedPotential, GaussianAverage, GaussianState};

/// How a [`FieldSignal`] is evaluated between its nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    #[default]
    PiecewiseLinear,
    /// Cubic Hermite with three-point slope estimates.
    PiecewiseCubic,
}

/// Sampled control field `E(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSignal {
    node_times: Vec<f64>,
    node_values: Vec<f64>,
    interpolation: Interpolation,
}

impl FieldSignal {
    pub fn new(node_times: Vec<f64>, node_values: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        if node_times.len() != node_values.len() {
            return Err(Error::InvalidField(format!(
                "{} times but {} values",
                node_times.len(),
                node_values.len()
            )));
        }
        if node_times.len() < 2 {
            return Err(Error::InvalidField("need at least two nodes".into()));
        }
        if let Some(k) = node_times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidField(format!("node times not strictly increasing at index {k}")));
        }
        if node_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite field value".into()));
        }
        Ok(Self { node_times, node_values, interpolation })
    }

    /// Identically zero field on `[t0, tf]`.
    pub fn zero(t0: f64, tf: f64) -> Self {
        Self::constant(t0, tf, 0.0)
    }

    pub fn constant(t0: f64, tf: f64, value: f64) -> Self {
        Self { node_times: vec![t0, tf], node_values: vec![value; 2], interpolation: Interpolation::PiecewiseLinear }
    }

    /// Samples `f` on `n` uniform nodes.
    pub fn sampled(t0: f64, tf: f64, n: usize, interpolation: Interpolation, f: impl Fn(f64) -> f64) -> Result<Self> {
        let times: Vec<f64> = (0..n).map(|k| t0 + (tf - t0) * k as f64 / (n - 1) as f64).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values, interpolation)
    }

    pub fn node_times(&self) -> &[f64] {
        &self.node_times
    }

    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn start(&self) -> f64 {
        self.node_times[0]
    }

    pub fn end(&self) -> f64 {
        *self.node_times.last().unwrap()
    }

    /// Same field played backwards: `E'(t) = E(start + end - t)`.
    pub fn reversed(&self) -> Self {
        let (a, b) = (self.start(), self.end());
        let node_times = self.node_times.iter().rev().map(|t| a + b - t).collect();
        let node_values = self.node_values.iter().rev().copied().collect();
        Self { node_times, node_values, interpolation: self.interpolation }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let (a, b) = (self.start(), self.end());
        let slack = 1e-9 * (b - a);
        if !(t >= a - slack && t <= b + slack) {
            return Err(Error::FieldOutOfRange { t, start: a, end: b });
        }
        let t = t.clamp(a, b);
        let n = self.node_times.len();
        let k = match self.node_times.partition_point(|&s| s <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (t0, t1) = (self.node_times[k], self.node_times[k + 1]);
        let (v0, v1) = (self.node_values[k], self.node_values[k + 1]);
        let h = t1 - t0;
        let u = (t - t0) / h;
        Ok(match self.interpolation {
            Interpolation::PiecewiseLinear => v0 + u * (v1 - v0),
            Interpolation::PiecewiseCubic => {
                let m0 = self.slope(k) * h;
                let m1 = self.slope(k + 1) * h;
                let u2 = u * u;
                let u3 = u2 * u;
                (2.0 * u3 - 3.0 * u2 + 1.0) * v0
                    + (u3 - 2.0 * u2 + u) * m0
                    + (-2.0 * u3 + 3.0 * u2) * v1
                    + (u3 - u2) * m1
            }
        })
    }

    // three-point derivative estimate at node k (one-sided at the ends)
    fn slope(&self, k: usize) -> f64 {
        let t = &self.node_times;
        let v = &self.node_values;
        let n = t.len();
        if k == 0 {
            return (v[1] - v[0]) / (t[1] - t[0]);
        }
        if k == n - 1 {
            return (v[n - 1] - v[n - 2]) / (t[n - 1] - t[n - 2]);
        }
        let (hl, hr) = (t[k] - t[k - 1], t[k + 1] - t[k]);
        let (dl, dr) = ((v[k] - v[k - 1]) / hl, (v[k + 1] - v[k]) / hr);
        (hr * dl + hl * dr) / (hl + hr)
    }

    /// Trapezoidal integral of the node values.
    pub fn node_integral(&self) -> f64 {
        self.node_times
            .windows(2)
            .zip(self.node_values.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }
}

/// Mass, dipole charge and averaged potential driving the Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub potential: AveragedPotential,
    pub mass: f64,
    pub charge: f64,
}

/// Kinetic, potential and total energy of the Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianEnergy {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

impl GaussianModel {
    /// Time derivatives of `[alpha, beta, x0, p0]` under field `field`.
    pub fn rhs<T: Real>(&self, state: [T; 4], field: T) -> [T; 4] {
        let [alpha, beta, x0, p0] = state;
        let inv_m = 1.0 / self.mass;
        let a2 = alpha * alpha;
        let alpha_dot = alpha * beta * (4.0 * inv_m);
        let beta_dot = (a2 - beta * beta) * (-2.0 * inv_m) - a2 * self.potential.d_alpha(alpha, x0) * 4.0;
        let x0_dot = p0 * inv_m;
        let p0_dot = field * self.charge - self.potential.d_x0(alpha, x0);
        [alpha_dot, beta_dot, x0_dot, p0_dot]
    }

    pub fn eom_rhs(&self, s: &GaussianState, field: f64) -> [f64; 4] {
        self.rhs(s.to_array(), field)
    }

    /// Right-hand side with its Jacobian and per-component Hessians with
    /// respect to `(alpha, beta, x0, p0, E)`.
    pub fn rhs_derivatives(&self, state: [f64; 4], field: f64) -> RhsDerivatives {
        let v = Dual2::<5>::variables([state[0], state[1], state[2], state[3], field]);
        let f = self.rhs([v[0], v[1], v[2], v[3]], v[4]);
        RhsDerivatives {
            value: f.map(|c| c.re),
            jacobian: f.map(|c| c.grad),
            hessian: f.map(|c| c.hess),
        }
    }

    pub fn energy(&self, s: &GaussianState, field: f64) -> GaussianEnergy {
        let kinetic = (s.p0 * s.p0 + (s.alpha * s.alpha + s.beta * s.beta) / s.alpha) / (2.0 * self.mass);
        let potential = self.potential.mean(s.alpha, s.x0) - self.charge * s.x0 * field;
        GaussianEnergy { kinetic, potential, total: kinetic + potential }
    }
}

/// Dynamics value, Jacobian (4x5) and Hessians (4 x 5x5).
#[derive(Debug, Clone, Copy)]
pub struct RhsDerivatives {
    pub value: [f64; 4],
    pub jacobian: [[f64; 5]; 4],
    pub hessian: [[[f64; 5]; 5]; 4],
}

/// States of a Gaussian replay at the integrator's time points.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GaussianState>,
    /// Field value at each time point.
    pub fields: Vec<f64>,
}

impl GaussianTrajectory {
    pub fn last(&self) -> &GaussianState {
        self.states.last().expect("trajectory is never empty")
    }

    /// CSV with columns `t, alpha, beta, x0, p0, E, K, V, Etot`.
    pub fn write_csv<W: Write>(&self, model: &GaussianModel, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "alpha", "beta", "x0", "p0", "E", "K", "V", "Etot"])?;
        for ((t, s), e) in self.times.iter().zip(&self.states).zip(&self.fields) {
            let en = model.energy(s, *e);
            w.write_record(
                [*t, s.alpha, s.beta, s.x0, s.p0, *e, en.kinetic, en.potential, en.total]
                    .iter()
                    .map(|v| format!("{v:e}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn axpy(s: [f64; 4], h: f64, k: [f64; 4]) -> [f64; 4] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2], s[3] + h * k[3]]
}

/// One classical RK4 step of length `h` from time `t`.
pub fn rk4_step(model: &GaussianModel, s: [f64; 4], t: f64, h: f64, field: impl Fn(f64) -> Result<f64>) -> Result<[f64; 4]> {
    let e0 = field(t)?;
    let em = field(t + 0.5 * h)?;
    let e1 = field(t + h)?;
    let k1 = model.rhs(s, e0);
    let k2 = model.rhs(axpy(s, 0.5 * h, k1), em);
    let k3 = model.rhs(axpy(s, 0.5 * h, k2), em);
    let k4 = model.rhs(axpy(s, h, k3), e1);
    Ok(std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])))
}

/// Fixed-step RK4 replay of `field` from `t0` to `tf`; the last step is
/// shortened to land on `tf` exactly.
pub fn propagate_gaussian(
    model: &GaussianModel,
    s0: &GaussianState,
    field: &FieldSignal,
    t0: f64,
    tf: f64,
    dt: f64,
) -> Result<GaussianTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidProblem(format!("time step must be positive, got {dt}")));
    }
    if !(tf > t0) {
        return Err(Error::InvalidProblem(format!("final time {tf} must exceed start {t0}")));
    }
    if !(s0.alpha > 0.0) {
        return Err(Error::AnsatzBreakdown { t: t0, alpha: s0.alpha });
    }
    field.eval(t0)?;
    field.eval(tf)?;
    let steps = ((tf - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut fields = Vec::with_capacity(steps + 1);
    let mut s = s0.to_array();
    times.push(t0);
    states.push(*s0);
    fields.push(field.eval(t0)?);
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let t_next = if k + 1 == steps { tf } else { t0 + (k + 1) as f64 * dt };
        s = rk4_step(model, s, t, t_next - t, |tau| field.eval(tau))?;
        if !(s[0] > 0.0) {
            return Err(Error::AnsatzBreakdown { t: t_next, alpha: s[0] });
        }
        times.push(t_next);
        states.push(GaussianState::from_array(s));
        fields.push(field.eval(t_next)?);
    }
    Ok(GaussianTrajectory { times, states, fields })
}

/// Default replay step, `(tf - t0) / 20000`.
pub fn default_step(t0: f64, tf: f64) -> f64 {
    (tf - t0) / 20000.0
}
