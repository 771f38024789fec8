//! Physical model: bistable potential, dipole coupling, the Gaussian-sum
//! representation of the potential and closed-form expectation values over
//! a Gaussian wavepacket.
//!
//! Hartree atomic units throughout.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dual::Real;
use crate::error::{Error, Result};

/// Proton mass in units of the electron mass.
pub const HYDROGEN_MASS: f64 = 1836.152673;

/// Parameters of the single Gaussian wavepacket
/// `psi(x) = (2 alpha / pi)^(1/4) exp(-(alpha + i beta)(x - x0)^2 + i p0 (x - x0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    /// Width parameter (a0^-2), must be positive.
    pub alpha: f64,
    /// Position-momentum correlation (a0^-2).
    pub beta: f64,
    /// Mean position (a0).
    pub x0: f64,
    /// Mean momentum (a.u.).
    pub p0: f64,
}

impl GaussianState {
    pub fn new(alpha: f64, beta: f64, x0: f64, p0: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidState(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { alpha, beta, x0, p0 })
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.alpha, self.beta, self.x0, self.p0]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self { alpha: v[0], beta: v[1], x0: v[2], p0: v[3] }
    }

    /// Wavefunction amplitude at `x`.
    pub fn amplitude(&self, x: f64) -> Complex64 {
        let y = x - self.x0;
        let norm = (2.0 * self.alpha / PI).powf(0.25);
        let exponent = Complex64::new(-self.alpha * y * y, -self.beta * y * y + self.p0 * y);
        norm * exponent.exp()
    }

    /// Position variance `1 / (4 alpha)`.
    pub fn position_variance(&self) -> f64 {
        0.25 / self.alpha
    }
}

/// Anything with a pointwise value on the real line.
pub trait Potential {
    fn value(&self, x: f64) -> f64;
}

/// `V(x) = V_B ((x / x_B)^2 - 1)^2` with linear dipole `mu(x) = q x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuarticDoubleWell {
    /// Barrier height `V_B` (Eh).
    pub barrier_height: f64,
    /// Distance `x_B` from a minimum to the barrier top (a0).
    pub barrier_distance: f64,
    /// Dipole gradient `q` (e).
    pub charge: f64,
    /// Particle mass (m_e).
    pub mass: f64,
}

impl Default for QuarticDoubleWell {
    fn default() -> Self {
        Self { barrier_height: 0.01, barrier_distance: 2.0, charge: 1.0, mass: HYDROGEN_MASS }
    }
}

impl QuarticDoubleWell {
    pub fn new(barrier_height: f64, barrier_distance: f64, charge: f64, mass: f64) -> Result<Self> {
        let pot = Self { barrier_height, barrier_distance, charge, mass };
        pot.validate()?;
        Ok(pot)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("barrier_height", self.barrier_height),
            ("barrier_distance", self.barrier_distance),
            ("mass", self.mass),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidModel(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    /// `V''` at either minimum, `8 V_B / x_B^2`.
    pub fn curvature_at_minimum(&self) -> f64 {
        8.0 * self.barrier_height / (self.barrier_distance * self.barrier_distance)
    }

    /// Local harmonic angular frequency at the minima.
    pub fn harmonic_frequency(&self) -> f64 {
        (self.curvature_at_minimum() / self.mass).sqrt()
    }

    /// Local harmonic period `2 pi sqrt(m / V'')`.
    pub fn harmonic_period(&self) -> f64 {
        2.0 * PI / self.harmonic_frequency()
    }

    /// Ground-state Gaussian of the local harmonic approximation centred at `x0`.
    pub fn harmonic_ground_state(&self, x0: f64) -> GaussianState {
        let alpha = 0.5 * (self.mass * self.curvature_at_minimum()).sqrt();
        GaussianState { alpha, beta: 0.0, x0, p0: 0.0 }
    }
}

impl Potential for QuarticDoubleWell {
    fn value(&self, x: f64) -> f64 {
        let r = x / self.barrier_distance;
        let u = r * r - 1.0;
        self.barrier_height * u * u
    }
}

/// `V(x) = k (x - c)^2 / 2`. The Gaussian ansatz is exact for it, which makes
/// it the cross-validation model between the Gaussian and grid propagators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicWell {
    pub center: f64,
    pub stiffness: f64,
}

impl HarmonicWell {
    pub fn frequency(&self, mass: f64) -> f64 {
        (self.stiffness / mass).sqrt()
    }

    pub fn ground_state(&self, mass: f64) -> GaussianState {
        GaussianState { alpha: 0.5 * (mass * self.stiffness).sqrt(), beta: 0.0, x0: self.center, p0: 0.0 }
    }
}

impl Potential for HarmonicWell {
    fn value(&self, x: f64) -> f64 {
        let y = x - self.center;
        0.5 * self.stiffness * y * y
    }
}

/// Closed-form expectation value of a field-free potential over the Gaussian
/// of width `alpha` centred at `x0`, together with its partial derivatives.
///
/// The mean value is independent of `beta` and `p0`. Implementations are
/// generic over [`Real`] so the same expressions can be differentiated.
pub trait GaussianAverage {
    fn mean<T: Real>(&self, alpha: T, x0: T) -> T;
    fn d_alpha<T: Real>(&self, alpha: T, x0: T) -> T;
    fn d_x0<T: Real>(&self, alpha: T, x0: T) -> T;
}

/// One term `g exp(-b (x - x_c)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTerm {
    /// Amplitude `g_p` (Eh).
    pub g: f64,
    /// Exponent `b_p` (a0^-2), non-negative.
    pub b: f64,
    /// Centre `x_p` (a0).
    pub x: f64,
}

/// Sum of Gaussians approximating a potential; the form for which the
/// Gaussian expectation values are available in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSumPotential {
    pub terms: Vec<GaussianTerm>,
}

// Published 5-term fit of the quartic well, in units of V_B, x_B^-2 and x_B.
const REFERENCE_G: [f64; 5] = [31.000, -1.529, -1.529, 31.000, 1.348];
const REFERENCE_B: [f64; 5] = [1.397, 1.658, 1.658, 1.397, 0.0];
const REFERENCE_X: [f64; 5] = [-2.981, -1.142, 1.142, 2.981, 0.0];

/// Sampling used when refitting the Gaussian sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    /// Fit interval as multiples of `x_B`.
    pub domain: (f64, f64),
    pub n_terms: usize,
    pub samples: usize,
    /// Largest acceptable RMS residual, in units of `V_B`.
    pub max_rms_residual: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { domain: (-3.0, 3.0), n_terms: 5, samples: 1001, max_rms_residual: 0.02 }
    }
}

impl GaussianSumPotential {
    pub fn new(terms: Vec<GaussianTerm>) -> Result<Self> {
        let fit = Self { terms };
        fit.validate()?;
        Ok(fit)
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidModel("Gaussian sum needs at least one term".into()));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if !(t.b >= 0.0) || !t.g.is_finite() || !t.x.is_finite() {
                return Err(Error::InvalidModel(format!("term {i} is invalid: {t:?}")));
            }
        }
        Ok(())
    }

    /// The published 5-term fit, rescaled to the given well.
    pub fn reference(pot: &QuarticDoubleWell) -> Self {
        let xb = pot.barrier_distance;
        let terms = (0..5)
            .map(|p| GaussianTerm {
                g: REFERENCE_G[p] * pot.barrier_height,
                b: REFERENCE_B[p] / (xb * xb),
                x: REFERENCE_X[p] * xb,
            })
            .collect();
        Self { terms }
    }

    /// Gaussian-sum representation of `pot`.
    ///
    /// With the default settings this returns [`Self::reference`] unchanged;
    /// any other settings run a least-squares refit.
    pub fn fit(pot: &QuarticDoubleWell, settings: &FitSettings) -> Result<Self> {
        if *settings == FitSettings::default() {
            return Ok(Self::reference(pot));
        }
        Self::refit(pot, settings)
    }

    /// Least-squares fit of a mirror-symmetric Gaussian sum to `pot`
    /// (Levenberg-Marquardt on pairs `(g, b, +-x)` plus a centred term when
    /// `n_terms` is odd).
    pub fn refit(pot: &QuarticDoubleWell, settings: &FitSettings) -> Result<Self> {
        pot.validate()?;
        if settings.n_terms == 0 {
            return Err(Error::InvalidModel("n_terms must be at least 1".into()));
        }
        let (lo, hi) = settings.domain;
        if !(lo <= -1.0 && hi >= 1.0) || settings.samples < 2 {
            return Err(Error::InvalidModel(format!(
                "fit domain [{lo}, {hi}] x_B must contain [-x_B, x_B]"
            )));
        }
        let xs: Vec<f64> = (0..settings.samples)
            .map(|i| lo + (hi - lo) * i as f64 / (settings.samples - 1) as f64)
            .collect();
        // Work in reduced units (x / x_B, V / V_B).
        let target: Vec<f64> = xs.iter().map(|x| (x * x - 1.0).powi(2)).collect();
        let mut params = SymmetricFit::initial(settings.n_terms);
        let residual = params.levenberg_marquardt(&xs, &target, 500);
        let rms = residual;
        if !(rms <= settings.max_rms_residual) {
            return Err(Error::FitResidual { rms, threshold: settings.max_rms_residual });
        }
        let xb = pot.barrier_distance;
        let terms = params
            .terms()
            .into_iter()
            .map(|t| GaussianTerm { g: t.g * pot.barrier_height, b: t.b / (xb * xb), x: t.x * xb })
            .collect();
        Ok(Self { terms })
    }

    /// Mean potential including the dipole term, `U = <V> - q x0 E`.
    pub fn mean_potential(&self, s: &GaussianState, field: f64, charge: f64) -> f64 {
        self.mean(s.alpha, s.x0) - charge * s.x0 * field
    }

    /// `dU/d alpha`; the dipole term does not depend on the width.
    pub fn du_dalpha(&self, s: &GaussianState) -> f64 {
        self.d_alpha(s.alpha, s.x0)
    }

    /// `dU/d x0`, including the dipole force `-q E`.
    pub fn du_dx0(&self, s: &GaussianState, field: f64, charge: f64) -> f64 {
        self.d_x0(s.alpha, s.x0) - charge * field
    }
}

impl Potential for GaussianSumPotential {
    fn value(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.g * (-t.b * (x - t.x).powi(2)).exp()).sum()
    }
}

impl GaussianAverage for GaussianSumPotential {
    fn mean<T: Real>(&self, alpha: T, x0: T) -> T {
        let two_a = alpha * 2.0;
        let mut sum = T::cst(0.0);
        for t in &self.terms {
            let ratio = two_a / (two_a + t.b);
            let d = x0 - t.x;
            let big_b = ratio * t.b * d * d;
            sum = sum + (-big_b).exp() * ratio.sqrt() * t.g;
        }
        sum
    }

    fn d_alpha<T: Real>(&self, alpha: T, x0: T) -> T {
        let two_a = alpha * 2.0;
        let inv_4a2 = (alpha * alpha * 4.0).recip();
        let mut sum = T::cst(0.0);
        for t in &self.terms {
            if t.b == 0.0 {
                continue;
            }
            let denom = two_a + t.b;
            let ratio = two_a / denom;
            let d = x0 - t.x;
            let big_b = ratio * t.b * d * d;
            let big_d = (-big_b).exp() * ratio * ratio.sqrt() * (t.g * t.b);
            sum = sum + big_d * (inv_4a2 - d * d * t.b / (alpha * denom));
        }
        sum
    }

    fn d_x0<T: Real>(&self, alpha: T, x0: T) -> T {
        let two_a = alpha * 2.0;
        let mut sum = T::cst(0.0);
        for t in &self.terms {
            if t.b == 0.0 {
                continue;
            }
            let ratio = two_a / (two_a + t.b);
            let d = x0 - t.x;
            let big_b = ratio * t.b * d * d;
            let big_d = (-big_b).exp() * ratio * ratio.sqrt() * (t.g * t.b);
            sum = sum + big_d * d;
        }
        sum * -2.0
    }
}

impl GaussianAverage for HarmonicWell {
    fn mean<T: Real>(&self, alpha: T, x0: T) -> T {
        let d = x0 - self.center;
        (d * d + (alpha * 4.0).recip()) * (0.5 * self.stiffness)
    }

    fn d_alpha<T: Real>(&self, alpha: T, _x0: T) -> T {
        (alpha * alpha).recip() * (-self.stiffness / 8.0)
    }

    fn d_x0<T: Real>(&self, _alpha: T, x0: T) -> T {
        (x0 - self.center) * self.stiffness
    }
}

/// The averaged potentials usable by the Gaussian equations of motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AveragedPotential {
    GaussianSum(GaussianSumPotential),
    Harmonic(HarmonicWell),
}

impl GaussianAverage for AveragedPotential {
    fn mean<T: Real>(&self, alpha: T, x0: T) -> T {
        match self {
            Self::GaussianSum(p) => p.mean(alpha, x0),
            Self::Harmonic(p) => p.mean(alpha, x0),
        }
    }
    fn d_alpha<T: Real>(&self, alpha: T, x0: T) -> T {
        match self {
            Self::GaussianSum(p) => p.d_alpha(alpha, x0),
            Self::Harmonic(p) => p.d_alpha(alpha, x0),
        }
    }
    fn d_x0<T: Real>(&self, alpha: T, x0: T) -> T {
        match self {
            Self::GaussianSum(p) => p.d_x0(alpha, x0),
            Self::Harmonic(p) => p.d_x0(alpha, x0),
        }
    }
}

impl Potential for AveragedPotential {
    fn value(&self, x: f64) -> f64 {
        match self {
            Self::GaussianSum(p) => p.value(x),
            Self::Harmonic(p) => p.value(x),
        }
    }
}

/// `|<a|b>|^2` for two Gaussians, in closed form.
pub fn gaussian_overlap(a: &GaussianState, b: &GaussianState) -> f64 {
    overlap_generic([b.alpha, b.beta, b.x0, b.p0], a).clamp(0.0, 1.0)
}

/// `|<fixed|state>|^2` with `state = [alpha, beta, x0, p0]` generic so the
/// terminal cost can be differentiated.
pub fn overlap_generic<T: Real>(state: [T; 4], fixed: &GaussianState) -> T {
    let [alpha, beta, x0, p0] = state;
    // <fixed| integrand after shifting x -> x - fixed.x0:
    // exponent = -P y^2 + Q y + R
    let delta = x0 - fixed.x0;
    let dp = p0 - fixed.p0;
    let pr = alpha + fixed.alpha;
    let pi = beta - fixed.beta;
    let qr = alpha * delta * 2.0;
    let qi = beta * delta * 2.0 + dp;
    let p_abs2 = pr * pr + pi * pi;
    let re_q2_pbar = (qr * qr - qi * qi) * pr + qr * qi * pi * 2.0;
    let exponent = re_q2_pbar / (p_abs2 * 2.0) - alpha * delta * delta * 2.0;
    (alpha * fixed.alpha).sqrt() * 2.0 / p_abs2.sqrt() * exponent.exp()
}

// Reduced-unit symmetric parameterisation: pairs (g, sqrt(b), x) mirrored
// about the origin, plus an optional centred (g, sqrt(b)).
#[derive(Debug, Clone)]
struct SymmetricFit {
    pairs: Vec<[f64; 3]>,
    centre: Option<[f64; 2]>,
}

impl SymmetricFit {
    fn initial(n_terms: usize) -> Self {
        if n_terms == 5 {
            return Self {
                pairs: vec![
                    [REFERENCE_G[3], REFERENCE_B[3].sqrt(), REFERENCE_X[3]],
                    [REFERENCE_G[2], REFERENCE_B[2].sqrt(), REFERENCE_X[2]],
                ],
                centre: Some([REFERENCE_G[4], 0.0]),
            };
        }
        let n_pairs = n_terms / 2;
        let pairs = (0..n_pairs)
            .map(|i| {
                if i == 0 {
                    [-1.5, 1.3, 1.1]
                } else {
                    let f = i as f64 / n_pairs as f64;
                    [10.0 + 20.0 * f, 1.2, 1.8 + 1.2 * f]
                }
            })
            .collect();
        let centre = (n_terms % 2 == 1).then_some([1.3, 0.0]);
        Self { pairs, centre }
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.pairs.iter().flatten().copied().collect();
        if let Some(c) = self.centre {
            v.extend_from_slice(&c);
        }
        v
    }

    fn from_vec(&self, v: &[f64]) -> Self {
        let pairs = v.chunks(3).take(self.pairs.len()).map(|c| [c[0], c[1], c[2]]).collect();
        let centre = self.centre.map(|_| {
            let k = 3 * self.pairs.len();
            [v[k], v[k + 1]]
        });
        Self { pairs, centre }
    }

    fn terms(&self) -> Vec<GaussianTerm> {
        let mut out = Vec::new();
        for &[g, sb, x] in &self.pairs {
            let x = x.abs();
            out.push(GaussianTerm { g, b: sb * sb, x: -x });
            out.push(GaussianTerm { g, b: sb * sb, x });
        }
        if let Some([g, sb]) = self.centre {
            out.push(GaussianTerm { g, b: sb * sb, x: 0.0 });
        }
        out
    }

    // model values and Jacobian rows at every sample
    fn evaluate(&self, xs: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let np = self.to_vec().len();
        let mut values = DVector::zeros(xs.len());
        let mut jac = DMatrix::zeros(xs.len(), np);
        for (i, &x) in xs.iter().enumerate() {
            let mut col = 0;
            for &[g, sb, c] in &self.pairs {
                let b = sb * sb;
                for sign in [-1.0, 1.0] {
                    let d = x - sign * c;
                    let e = (-b * d * d).exp();
                    values[i] += g * e;
                    jac[(i, col)] += e;
                    jac[(i, col + 1)] += -g * e * d * d * 2.0 * sb;
                    jac[(i, col + 2)] += g * e * 2.0 * b * d * sign;
                }
                col += 3;
            }
            if let Some([g, sb]) = self.centre {
                let b = sb * sb;
                let e = (-b * x * x).exp();
                values[i] += g * e;
                jac[(i, col)] += e;
                jac[(i, col + 1)] += -g * e * x * x * 2.0 * sb;
            }
        }
        (values, jac)
    }

    /// Returns the RMS residual at the final parameters.
    fn levenberg_marquardt(&mut self, xs: &[f64], target: &[f64], max_iter: usize) -> f64 {
        let target = DVector::from_column_slice(target);
        let rms = |r: &DVector<f64>| (r.norm_squared() / r.len() as f64).sqrt();
        let (values, mut jac) = self.evaluate(xs);
        let mut resid = values - &target;
        let mut damping = 1e-3;
        for _ in 0..max_iter {
            let jtj = jac.transpose() * &jac;
            let grad = jac.transpose() * &resid;
            if grad.amax() < 1e-12 {
                break;
            }
            let mut improved = false;
            for _ in 0..20 {
                let mut lhs = jtj.clone();
                for k in 0..lhs.nrows() {
                    lhs[(k, k)] += damping * (1.0 + jtj[(k, k)]);
                }
                let Some(step) = lhs.cholesky().map(|c| c.solve(&(-&grad))) else {
                    damping *= 10.0;
                    continue;
                };
                let mut v = self.to_vec();
                for (p, s) in v.iter_mut().zip(step.iter()) {
                    *p += s;
                }
                let trial = self.from_vec(&v);
                let (tv, tj) = trial.evaluate(xs);
                let tr = tv - &target;
                if tr.norm_squared() < resid.norm_squared() {
                    *self = trial;
                    resid = tr;
                    jac = tj;
                    damping = (damping * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
                damping *= 10.0;
            }
            if !improved {
                break;
            }
        }
        rms(&resid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_well() -> (QuarticDoubleWell, GaussianSumPotential) {
        let pot = QuarticDoubleWell::default();
        let fit = GaussianSumPotential::reference(&pot);
        (pot, fit)
    }

    // Composite Simpson on [-L, L]; integrands here are smooth and decay fast.
    fn quad(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn quartic_values() {
        let pot = QuarticDoubleWell::default();
        assert_eq!(pot.value(0.0), 0.01);
        assert_eq!(pot.value(2.0), 0.0);
        assert_eq!(pot.value(-2.0), 0.0);
        assert!((pot.value(4.0) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn reference_coefficients_scaled() {
        let (_, fit) = reference_well();
        assert_eq!(fit.terms.len(), 5);
        assert!((fit.terms[0].g - 0.31).abs() < 1e-15);
        assert!((fit.terms[0].b - 1.397 / 4.0).abs() < 1e-15);
        assert!((fit.terms[0].x + 2.981 * 2.0).abs() < 1e-15);
        assert_eq!(fit.terms[4].b, 0.0);
        let default = GaussianSumPotential::fit(&QuarticDoubleWell::default(), &FitSettings::default())
            .unwrap();
        assert_eq!(default, fit);
    }

    #[test]
    fn gaussian_sum_matches_quartic() {
        let (pot, fit) = reference_well();
        assert!((fit.value(0.0) - 0.01).abs() / 0.01 < 0.01);
        assert!(fit.value(2.0).abs() < 0.005 * 0.01);
        // within 2% V_B on [-1.5 x_B, 1.5 x_B]
        for i in 0..=3000 {
            let x = -3.0 + 6.0 * i as f64 / 3000.0;
            assert!((fit.value(x) - pot.value(x)).abs() < 0.02 * 0.01, "x = {x}");
        }
        // 10% of the quartic value out to 2 x_B
        for x in [2.5f64, 3.0, 3.5, 4.0] {
            for x in [x, -x] {
                let q = pot.value(x);
                assert!((fit.value(x) - q).abs() < 0.1 * q, "x = {x}");
            }
        }
        // the fit flattens beyond ~2.5 x_B: at 3 x_B it reaches about half the quartic
        let at_edge = fit.value(6.0);
        assert!((at_edge - 0.323_273_74).abs() < 1e-6, "{at_edge}");
        assert!((pot.value(6.0) - 0.64).abs() < 1e-12);
    }

    #[test]
    fn constant_term() {
        let fit = GaussianSumPotential::new(vec![GaussianTerm { g: 1.0, b: 0.0, x: 0.0 }]).unwrap();
        assert_eq!(fit.value(-3.7), 1.0);
        let s = GaussianState::new(2.0, 0.5, 1.0, -1.0).unwrap();
        assert_eq!(fit.du_dalpha(&s), 0.0);
        assert_eq!(fit.du_dx0(&s, 0.0, 1.0), 0.0);
    }

    #[test]
    fn mean_potential_against_quadrature() {
        let (_, fit) = reference_well();
        let s = GaussianState::new(3.0, 0.0, -2.0, 0.0).unwrap();
        let exact = quad(|x| s.amplitude(x).norm_sqr() * fit.value(x), -8.0, 4.0, 20000);
        assert!((fit.mean_potential(&s, 0.0, 1.0) - exact).abs() < 1e-10);
        // dipole shift
        let shifted = fit.mean_potential(&s, 0.005, 1.0) - fit.mean_potential(&s, 0.0, 1.0);
        assert!((shifted - 0.01).abs() < 1e-15);
    }

    #[test]
    fn near_delta_limit() {
        let (_, fit) = reference_well();
        for x0 in [-3.0, -1.0, 0.5, 2.0] {
            let v = fit.value(x0);
            let u = fit.mean_potential(&GaussianState::new(1e6, 0.0, x0, 0.0).unwrap(), 0.0, 1.0);
            assert!((u - v).abs() <= 1e-3 * v.abs().max(1e-3), "{x0}: {u} vs {v}");
        }
    }

    #[test]
    fn field_force_and_symmetry() {
        let (_, fit) = reference_well();
        let s = GaussianState::new(2.5, 0.3, 0.0, 1.0).unwrap();
        assert!(fit.du_dx0(&s, 0.0, 1.0).abs() < 1e-15);
        let s = GaussianState::new(2.5, 0.3, -1.2, 1.0).unwrap();
        let f0 = fit.du_dx0(&s, 0.0, 1.0);
        assert!((fit.du_dx0(&s, 0.001, 1.0) - (f0 - 0.001)).abs() < 1e-15);
    }

    #[test]
    fn harmonic_width_at_well_minimum() {
        // The quartic's anharmonicity leaves beta-dot ~3.8% of 2 alpha^2 / m
        // for the harmonic-width Gaussian at the minimum.
        let (pot, fit) = reference_well();
        let s = pot.harmonic_ground_state(-pot.barrier_distance);
        let m = pot.mass;
        let beta_dot = -2.0 * s.alpha * s.alpha / m - 4.0 * s.alpha * s.alpha * fit.du_dalpha(&s);
        let rel = beta_dot / (2.0 * s.alpha * s.alpha / m);
        assert!((rel - FROZEN_REL_BETA_DOT).abs() < 1e-6, "{rel}");

        // For the exactly harmonic model the same construction is stationary.
        let well = HarmonicWell { center: -2.0, stiffness: pot.curvature_at_minimum() };
        let s = well.ground_state(m);
        let beta_dot = -2.0 * s.alpha * s.alpha / m - 4.0 * s.alpha * s.alpha * well.d_alpha(s.alpha, s.x0);
        assert!(beta_dot.abs() < 1e-12 * 2.0 * s.alpha * s.alpha / m);
    }

    // quadrature of <V_fit> differenced in alpha (scipy.integrate.quad, h = 1e-4)
    const FROZEN_REL_BETA_DOT: f64 = 0.038_137_941;

    #[test]
    fn overlap_limits() {
        let a = GaussianState::new(3.0, 1.0, -2.0, 0.0).unwrap();
        assert!((gaussian_overlap(&a, &a) - 1.0).abs() < 1e-14);
        let far = GaussianState { x0: 40.0, ..a };
        assert!(gaussian_overlap(&a, &far) < 1e-12);
    }

    #[test]
    fn overlap_against_quadrature() {
        let a = GaussianState::new(3.0, 1.0, -2.0, 0.0).unwrap();
        let b = GaussianState::new(2.0, 0.0, 2.0, 3.0).unwrap();
        let re = quad(|x| (a.amplitude(x).conj() * b.amplitude(x)).re, -10.0, 10.0, 40000);
        let im = quad(|x| (a.amplitude(x).conj() * b.amplitude(x)).im, -10.0, 10.0, 40000);
        let exact = re * re + im * im;
        let got = gaussian_overlap(&a, &b);
        assert!((got - exact).abs() < 1e-10, "{got} vs {exact}");
        assert!((gaussian_overlap(&b, &a) - got).abs() < 1e-15);
    }

    #[test]
    fn refit_reproduces_reference_quality() {
        let pot = QuarticDoubleWell::default();
        let settings = FitSettings { samples: 801, ..FitSettings::default() };
        let fit = GaussianSumPotential::fit(&pot, &settings).unwrap();
        assert_eq!(fit.terms.len(), 5);
        for t in &fit.terms {
            assert!(t.b >= 0.0);
            assert!(fit.terms.iter().any(|o| o.g == t.g && o.b == t.b && o.x == -t.x));
        }
        for x in [-2.0, 0.0, 1.0, 3.0] {
            assert!((fit.value(x) - pot.value(x)).abs() < 0.03 * 0.01, "x = {x}");
        }
    }

    #[test]
    fn refit_rejects_poor_fit() {
        let pot = QuarticDoubleWell::default();
        let settings = FitSettings { n_terms: 1, max_rms_residual: 1e-4, ..FitSettings::default() };
        match GaussianSumPotential::fit(&pot, &settings) {
            Err(Error::FitResidual { rms, .. }) => assert!(rms > 1e-4),
            other => panic!("expected residual error, got {other:?}"),
        }
    }
}
