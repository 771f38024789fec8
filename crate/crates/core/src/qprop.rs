//! Grid wavefunctions, split-operator propagation and bound states.
//!
//! This is the reference the Gaussian model is checked against: the
//! one-dimensional Schrodinger equation with `H = p^2 / 2m + V(x) - q x E(t)`
//! on a uniform periodic grid, using the exact potential by default.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dynamics::{FieldSignal, GaussianModel};
use crate::error::{Error, Result};
use crate::potential::{AveragedPotential, GaussianState, GaussianSumPotential, HarmonicWell, Potential, QuarticDoubleWell};

/// Default propagation step (a.u.).
pub const DEFAULT_DT: f64 = 0.5;
/// Relative norm change that aborts a propagation.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

/// Uniform periodic grid `x_j = x_min + j dx`, `dx = (x_max - x_min) / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        let g = Self { x_min, x_max, n_points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::InvalidGrid(format!("need x_max > x_min, got [{}, {}]", self.x_min, self.x_max)));
        }
        if self.n_points < 64 || !self.n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("point count must be a power of two >= 64, got {}", self.n_points)));
        }
        Ok(())
    }

    /// `[-6 x_B, 6 x_B]` with 1024 points.
    pub fn for_well(well: &QuarticDoubleWell) -> Self {
        let r = 6.0 * well.barrier_distance;
        Self { x_min: -r, x_max: r, n_points: 1024 }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_points as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_points).map(|j| self.x_min + j as f64 * dx).collect()
    }

    /// Wavenumbers in FFT order.
    pub fn momenta(&self) -> Vec<f64> {
        let n = self.n_points;
        let dk = 2.0 * PI / (n as f64 * self.dx());
        (0..n).map(|j| if j < n / 2 { j as f64 } else { j as f64 - n as f64 } * dk).collect()
    }

    pub fn nyquist_momentum(&self) -> f64 {
        PI / self.dx()
    }
}

/// Potential used on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridPotential {
    Quartic(QuarticDoubleWell),
    Harmonic(HarmonicWell),
    /// The Gaussian-sum fit, for ablation against the exact potential.
    Fitted(GaussianSumPotential),
}

impl Potential for GridPotential {
    fn value(&self, x: f64) -> f64 {
        match self {
            Self::Quartic(p) => p.value(x),
            Self::Harmonic(p) => p.value(x),
            Self::Fitted(p) => p.value(x),
        }
    }
}

/// Hamiltonian `p^2 / 2m + V(x) - q x E(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumModel {
    pub potential: GridPotential,
    pub mass: f64,
    pub charge: f64,
}

impl QuantumModel {
    /// Exact quartic well.
    pub fn exact(well: &QuarticDoubleWell) -> Self {
        Self { potential: GridPotential::Quartic(*well), mass: well.mass, charge: well.charge }
    }

    /// Same potential the Gaussian model averages.
    pub fn from_gaussian_model(model: &GaussianModel) -> Self {
        let potential = match &model.potential {
            AveragedPotential::GaussianSum(p) => GridPotential::Fitted(p.clone()),
            AveragedPotential::Harmonic(p) => GridPotential::Harmonic(*p),
        };
        Self { potential, mass: model.mass, charge: model.charge }
    }

    /// Energy separating bound from unbound states, if the potential has a
    /// barrier.
    pub fn barrier_energy(&self) -> Option<f64> {
        match &self.potential {
            GridPotential::Quartic(w) => Some(w.barrier_height),
            GridPotential::Fitted(p) => Some(p.value(0.0)),
            GridPotential::Harmonic(_) => None,
        }
    }
}

/// Amplitudes on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub grid: SpatialGrid,
    pub amplitudes: Vec<Complex64>,
}

struct Spectral {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self { forward, inverse, scratch: vec![Complex64::default(); len] }
    }

    fn forward(&mut self, v: &mut [Complex64]) {
        self.forward.process_with_scratch(v, &mut self.scratch);
    }

    // unnormalised
    fn inverse(&mut self, v: &mut [Complex64]) {
        self.inverse.process_with_scratch(v, &mut self.scratch);
    }
}

impl WaveFunction {
    pub fn new(grid: SpatialGrid, amplitudes: Vec<Complex64>) -> Result<Self> {
        grid.validate()?;
        if amplitudes.len() != grid.n_points {
            return Err(Error::Dimension(format!("{} amplitudes for {} grid points", amplitudes.len(), grid.n_points)));
        }
        Ok(Self { grid, amplitudes })
    }

    /// `sum |psi|^2 dx`.
    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) {
        let s = 1.0 / self.norm().sqrt();
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum::<Complex64>() * self.grid.dx()
    }

    fn weighted(&self, f: impl Fn(f64) -> f64) -> f64 {
        let dx = self.grid.dx();
        self.grid.points().iter().zip(&self.amplitudes).map(|(&x, a)| f(x) * a.norm_sqr()).sum::<f64>() * dx / self.norm()
    }

    pub fn x_mean(&self) -> f64 {
        self.weighted(|x| x)
    }

    pub fn x_variance(&self) -> f64 {
        let m = self.x_mean();
        self.weighted(|x| (x - m) * (x - m))
    }

    pub fn potential_mean(&self, potential: &impl Potential) -> f64 {
        self.weighted(|x| potential.value(x))
    }

    fn momentum_moments(&self) -> (f64, f64) {
        let mut v = self.amplitudes.clone();
        Spectral::new(v.len()).forward(&mut v);
        let k = self.grid.momenta();
        let total: f64 = v.iter().map(|a| a.norm_sqr()).sum();
        let m1 = k.iter().zip(&v).map(|(k, a)| k * a.norm_sqr()).sum::<f64>() / total;
        let m2 = k.iter().zip(&v).map(|(k, a)| k * k * a.norm_sqr()).sum::<f64>() / total;
        (m1, m2)
    }

    /// `<p>` from the spectral density.
    pub fn p_mean(&self) -> f64 {
        self.momentum_moments().0
    }

    pub fn kinetic_energy(&self, mass: f64) -> f64 {
        self.momentum_moments().1 / (2.0 * mass)
    }

    /// Binary snapshot: magic `GWF1`, then little-endian `x_min`, `x_max`
    /// (f64), `n_points` (u64), `time` (f64), and `n_points` pairs of f64
    /// `(re, im)`.
    pub fn write_snapshot<W: Write>(&self, time: f64, mut out: W) -> Result<()> {
        out.write_all(b"GWF1")?;
        out.write_all(&self.grid.x_min.to_le_bytes())?;
        out.write_all(&self.grid.x_max.to_le_bytes())?;
        out.write_all(&(self.grid.n_points as u64).to_le_bytes())?;
        out.write_all(&time.to_le_bytes())?;
        for a in &self.amplitudes {
            out.write_all(&a.re.to_le_bytes())?;
            out.write_all(&a.im.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a snapshot, returning its time.
    pub fn read_snapshot<R: Read>(mut input: R) -> Result<(f64, Self)> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"GWF1" {
            return Err(Error::Parse("not a wavefunction snapshot".into()));
        }
        let mut b = [0u8; 8];
        let mut f64_next = |input: &mut R| -> Result<f64> {
            input.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let x_min = f64_next(&mut input)?;
        let x_max = f64_next(&mut input)?;
        let mut nb = [0u8; 8];
        input.read_exact(&mut nb)?;
        let n = u64::from_le_bytes(nb) as usize;
        let grid = SpatialGrid::new(x_min, x_max, n)?;
        let time = f64_next(&mut input)?;
        let mut amplitudes = Vec::with_capacity(n);
        for _ in 0..n {
            let re = f64_next(&mut input)?;
            let im = f64_next(&mut input)?;
            amplitudes.push(Complex64::new(re, im));
        }
        Ok((time, Self { grid, amplitudes }))
    }
}

/// Samples the Gaussian on the grid and renormalises. The packet must keep
/// `5 / sqrt(2 alpha)` clear of both edges.
pub fn init_gaussian_on_grid(s: &GaussianState, grid: &SpatialGrid) -> Result<WaveFunction> {
    grid.validate()?;
    if !(s.alpha > 0.0) {
        return Err(Error::InvalidState(format!("alpha must be positive, got {}", s.alpha)));
    }
    let reach = 5.0 / (2.0 * s.alpha).sqrt();
    if s.x0 - grid.x_min < reach {
        return Err(Error::GridSupport { edge: "lower" });
    }
    if grid.x_max - s.x0 < reach {
        return Err(Error::GridSupport { edge: "upper" });
    }
    let amplitudes = grid.points().iter().map(|&x| s.amplitude(x)).collect();
    let mut psi = WaveFunction { grid: *grid, amplitudes };
    psi.normalize();
    Ok(psi)
}

/// Observables at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub t: f64,
    pub x_mean: f64,
    pub x_var: f64,
    pub p_mean: f64,
    pub norm: f64,
    /// Kinetic energy.
    pub kinetic: f64,
    /// `<V(x)>`, field excluded.
    pub potential: f64,
    /// `<H(t)>` including the dipole term.
    pub energy: f64,
}

/// Observable time series of a propagation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantumTrajectory {
    pub rows: Vec<Observables>,
}

impl QuantumTrajectory {
    /// CSV with columns `t, x_mean, x_var, p_mean, norm, K, V, E`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x_mean", "x_var", "p_mean", "norm", "K", "V", "E"])?;
        for r in &self.rows {
            w.write_record(
                [r.t, r.x_mean, r.x_var, r.p_mean, r.norm, r.kinetic, r.potential, r.energy]
                    .iter()
                    .map(|v| format!("{v:e}")),
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn last(&self) -> &Observables {
        self.rows.last().expect("trajectory is never empty")
    }
}

fn observe(psi: &WaveFunction, model: &QuantumModel, t: f64, field: f64) -> Observables {
    let x_mean = psi.x_mean();
    let (p1, p2) = psi.momentum_moments();
    let kinetic = p2 / (2.0 * model.mass);
    let potential = psi.potential_mean(&model.potential);
    Observables {
        t,
        x_mean,
        x_var: psi.x_variance(),
        p_mean: p1,
        norm: psi.norm(),
        kinetic,
        potential,
        energy: kinetic + potential - model.charge * field * x_mean,
    }
}

/// Strang split-operator propagation over the span of `field`: half
/// potential, full kinetic in momentum space, half potential, with the field
/// taken at the step midpoint. The step is shrunk so that an integer number
/// of steps covers the span. Observables are recorded at the start, every
/// `stride` steps and at the end; `observer` sees the wavefunction at each of
/// those times.
pub fn propagate_tdse_observed(
    psi0: &WaveFunction,
    field: &FieldSignal,
    model: &QuantumModel,
    dt: f64,
    stride: usize,
    mut observer: impl FnMut(f64, &WaveFunction),
) -> Result<(WaveFunction, QuantumTrajectory)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidProblem(format!("time step must be positive, got {dt}")));
    }
    if stride == 0 {
        return Err(Error::InvalidProblem("observable stride must be at least 1".into()));
    }
    psi0.grid.validate()?;
    let grid = psi0.grid;
    let (t0, tf) = (field.start(), field.end());
    let steps = ((tf - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (tf - t0) / steps as f64;
    let x = grid.points();
    let v: Vec<f64> = x.iter().map(|&x| model.potential.value(x)).collect();
    let kin: Vec<Complex64> =
        grid.momenta().iter().map(|k| Complex64::from_polar(1.0, -k * k / (2.0 * model.mass) * h)).collect();
    let inv_n = 1.0 / grid.n_points as f64;
    let k_limit = 0.25 * grid.nyquist_momentum();

    let mut psi = psi0.clone();
    let mut spectral = Spectral::new(grid.n_points);
    let mut traj = QuantumTrajectory::default();
    let norm0 = psi0.norm();
    let mut record = |psi: &WaveFunction, t: f64, traj: &mut QuantumTrajectory| -> Result<()> {
        let obs = observe(psi, model, t, field.eval(t)?);
        if (obs.norm - norm0).abs() > NORM_DRIFT_LIMIT * norm0 || !obs.norm.is_finite() {
            return Err(Error::NormDrift { t, norm: obs.norm });
        }
        if obs.p_mean.abs() > k_limit {
            return Err(Error::InvalidGrid(format!(
                "mean momentum {} at t = {t} exceeds a quarter of the grid Nyquist momentum {}",
                obs.p_mean,
                grid.nyquist_momentum()
            )));
        }
        traj.rows.push(obs);
        observer(t, psi);
        Ok(())
    };
    record(&psi, t0, &mut traj)?;
    let mut half = vec![Complex64::default(); grid.n_points];
    for step in 0..steps {
        let t = t0 + step as f64 * h;
        let e = field.eval(t + 0.5 * h)?;
        for j in 0..grid.n_points {
            half[j] = Complex64::from_polar(1.0, -(v[j] - model.charge * x[j] * e) * 0.5 * h);
        }
        let a = &mut psi.amplitudes;
        a.iter_mut().zip(&half).for_each(|(p, u)| *p *= u);
        spectral.forward(a);
        a.iter_mut().zip(&kin).for_each(|(p, u)| *p *= u);
        spectral.inverse(a);
        a.iter_mut().zip(&half).for_each(|(p, u)| *p *= u * inv_n);
        let t_next = if step + 1 == steps { tf } else { t0 + (step + 1) as f64 * h };
        if (step + 1) % stride == 0 || step + 1 == steps {
            record(&psi, t_next, &mut traj)?;
        }
    }
    Ok((psi, traj))
}

/// [`propagate_tdse_observed`] without an observer.
pub fn propagate_tdse(
    psi0: &WaveFunction,
    field: &FieldSignal,
    model: &QuantumModel,
    dt: f64,
    stride: usize,
) -> Result<(WaveFunction, QuantumTrajectory)> {
    propagate_tdse_observed(psi0, field, model, dt, stride, |_, _| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    Even,
    Odd,
}

/// An eigenstate of the grid Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundState {
    pub energy: f64,
    /// Under reflection about the grid centre.
    pub parity: Parity,
    /// Real amplitudes normalised to `sum psi^2 dx = 1`.
    pub amplitudes: Vec<f64>,
}

/// Eigenstates of the field-free grid Hamiltonian with energy below
/// `max_energy`, ascending. The kinetic operator is the Fourier one the
/// propagator uses, so these are exact stationary states of the discrete
/// problem up to the splitting error.
pub fn eigenstates(model: &QuantumModel, grid: &SpatialGrid, max_energy: f64) -> Result<Vec<BoundState>> {
    grid.validate()?;
    let n = grid.n_points;
    let dx = grid.dx();
    // T_jk = t(j - k), t(d) = (1/n) sum_l k_l^2 / 2m cos(k_l d dx)
    let k = grid.momenta();
    let t_of: Vec<f64> = (0..n)
        .map(|d| k.iter().map(|&kl| kl * kl * (kl * d as f64 * dx).cos()).sum::<f64>() / (2.0 * model.mass * n as f64))
        .collect();
    let x = grid.points();
    let h = DMatrix::from_fn(n, n, |i, j| {
        let d = if i >= j { i - j } else { j - i };
        t_of[d] + if i == j { model.potential.value(x[i]) } else { 0.0 }
    });
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] < max_energy).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = 1.0 / dx.sqrt();
    Ok(order
        .into_iter()
        .map(|i| {
            let col = eig.eigenvectors.column(i);
            let mirror: f64 = (0..n).map(|j| col[j] * col[(n - j) % n]).sum();
            BoundState {
                energy: eig.eigenvalues[i],
                parity: if mirror >= 0.0 { Parity::Even } else { Parity::Odd },
                amplitudes: col.iter().map(|v| v * scale).collect(),
            }
        })
        .collect())
}

/// States below the barrier (all states for a harmonic well).
pub fn bound_states(model: &QuantumModel, grid: &SpatialGrid) -> Result<Vec<BoundState>> {
    eigenstates(model, grid, model.barrier_energy().unwrap_or(f64::INFINITY))
}

/// Eigenvalues as CSV `index, energy, parity`.
pub fn write_eigen_csv<W: Write>(states: &[BoundState], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "energy", "parity"])?;
    for (i, s) in states.iter().enumerate() {
        let p = match s.parity {
            Parity::Even => "even",
            Parity::Odd => "odd",
        };
        w.write_record([i.to_string(), format!("{:e}", s.energy), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `|x0_target - <x>| / x_B`.
pub fn err_metric(psi_final: &WaveFunction, x0_target: f64, x_b: f64) -> f64 {
    (x0_target - psi_final.x_mean()).abs() / x_b
}

/// Moment-matched Gaussian: `x0 = <x>`, `p0 = <p>`, `alpha = 1 / (4 var)`
/// and `beta = -2 alpha cov`, with `cov` the symmetrised position-momentum
/// covariance.
pub fn reduce_to_gaussian(psi: &WaveFunction) -> GaussianState {
    let x0 = psi.x_mean();
    let p0 = psi.p_mean();
    let alpha = 0.25 / psi.x_variance();
    // (p - p0) psi spectrally
    let n = psi.grid.n_points;
    let mut spectral = Spectral::new(n);
    let mut d = psi.amplitudes.clone();
    spectral.forward(&mut d);
    for (a, k) in d.iter_mut().zip(psi.grid.momenta()) {
        *a *= k / n as f64;
    }
    spectral.inverse(&mut d);
    let x = psi.grid.points();
    let cov = (0..n)
        .map(|j| (psi.amplitudes[j].conj() * (x[j] - x0) * (d[j] - p0 * psi.amplitudes[j])).re)
        .sum::<f64>()
        * psi.grid.dx()
        / psi.norm();
    GaussianState { alpha, beta: -2.0 * alpha * cov, x0, p0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpatialGrid {
        SpatialGrid::new(-10.0, 10.0, 1024).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(SpatialGrid::new(0.0, 1.0, 100).is_err());
        assert!(SpatialGrid::new(0.0, 1.0, 32).is_err());
        assert!(SpatialGrid::new(1.0, 1.0, 64).is_err());
        let g = SpatialGrid::new(-1.0, 1.0, 64).unwrap();
        assert_eq!(g.points().len(), 64);
        assert!((g.momenta()[32] + g.nyquist_momentum()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_moments() {
        let s = GaussianState { alpha: 3.0, beta: 0.0, x0: -2.0, p0: 0.0 };
        let psi = init_gaussian_on_grid(&s, &grid()).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        assert!((psi.x_mean() + 2.0).abs() < 1e-8);
        assert!((psi.x_variance() - 1.0 / 12.0).abs() < 1e-6);
        let moving = init_gaussian_on_grid(&GaussianState { p0: 5.0, ..s }, &grid()).unwrap();
        assert!((moving.p_mean() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn support_violation_names_edge() {
        let s = GaussianState { alpha: 0.05, beta: 0.0, x0: -8.0, p0: 0.0 };
        assert!(matches!(init_gaussian_on_grid(&s, &grid()), Err(Error::GridSupport { edge: "lower" })));
        let s = GaussianState { x0: 8.0, ..s };
        assert!(matches!(init_gaussian_on_grid(&s, &grid()), Err(Error::GridSupport { edge: "upper" })));
    }

    #[test]
    fn reduction_round_trip() {
        let s = GaussianState { alpha: 2.0, beta: -0.7, x0: 0.4, p0: 1.5 };
        let r = reduce_to_gaussian(&init_gaussian_on_grid(&s, &grid()).unwrap());
        for (a, b) in r.to_array().iter().zip(s.to_array()) {
            assert!((a - b).abs() < 1e-6, "{r:?} vs {s:?}");
        }
    }

    #[test]
    fn err_metric_examples() {
        let g = grid();
        let at = |x0: f64| init_gaussian_on_grid(&GaussianState { alpha: 3.0, beta: 0.0, x0, p0: 0.0 }, &g).unwrap();
        assert!(err_metric(&at(2.0), 2.0, 2.0) < 1e-9);
        assert!((err_metric(&at(0.0), 2.0, 2.0) - 1.0).abs() < 1e-9);
        assert!((err_metric(&at(-2.0), 2.0, 2.0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_double_peak_reduces_to_centre() {
        let g = grid();
        let a = init_gaussian_on_grid(&GaussianState { alpha: 3.0, beta: 0.0, x0: -2.0, p0: 0.0 }, &g).unwrap();
        let b = init_gaussian_on_grid(&GaussianState { alpha: 3.0, beta: 0.0, x0: 2.0, p0: 0.0 }, &g).unwrap();
        let mut psi = WaveFunction::new(g, a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| x + y).collect()).unwrap();
        psi.normalize();
        assert!(reduce_to_gaussian(&psi).x0.abs() < 1e-10);
    }

    #[test]
    fn snapshot_round_trip() {
        let s = GaussianState { alpha: 1.0, beta: 0.3, x0: 0.5, p0: -1.0 };
        let psi = init_gaussian_on_grid(&s, &SpatialGrid::new(-8.0, 8.0, 64).unwrap()).unwrap();
        let mut buf = Vec::new();
        psi.write_snapshot(12.5, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 8 * 4 + 64 * 16);
        let (t, back) = WaveFunction::read_snapshot(&buf[..]).unwrap();
        assert_eq!(t, 12.5);
        assert_eq!(back, psi);
        assert!(WaveFunction::read_snapshot(&b"XXXX"[..]).is_err());
    }
}
