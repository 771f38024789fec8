use gaussctl::dynamics::{propagate_gaussian, FieldSignal, GaussianModel, Interpolation};
use gaussctl::potential::{AveragedPotential, GaussianState, HarmonicWell, QuarticDoubleWell, HYDROGEN_MASS};
use gaussctl::qprop::*;
use num_complex::Complex64;

fn well(mass_units: f64) -> QuarticDoubleWell {
    QuarticDoubleWell::default().with_mass(mass_units * HYDROGEN_MASS)
}

fn eigen_grid() -> SpatialGrid {
    SpatialGrid::new(-6.0, 6.0, 256).unwrap()
}

#[test]
fn eight_and_sixteen_states_below_the_barrier() {
    for (m, count) in [(1.0, 8), (5.0, 16)] {
        let w = well(m);
        let states = bound_states(&QuantumModel::exact(&w), &eigen_grid()).unwrap();
        assert_eq!(states.len(), count, "mass {m}");
        // tunnelling doublets: even below odd
        for pair in states.chunks(2) {
            assert_eq!(pair[0].parity, Parity::Even);
            assert_eq!(pair[1].parity, Parity::Odd);
        }
        // same answer on a finer grid
        let fine = bound_states(&QuantumModel::exact(&w), &SpatialGrid::new(-8.0, 8.0, 512).unwrap()).unwrap();
        assert_eq!(fine.len(), count);
        for (a, b) in states.iter().zip(&fine) {
            assert!((a.energy - b.energy).abs() < 1e-9);
        }
    }
}

#[test]
fn harmonic_level_spacing() {
    let h = HarmonicWell { center: 0.0, stiffness: 0.02 };
    let model = QuantumModel { potential: GridPotential::Harmonic(h), mass: HYDROGEN_MASS, charge: 1.0 };
    let grid = SpatialGrid::new(-4.0, 4.0, 512).unwrap();
    let states = eigenstates(&model, &grid, 0.05).unwrap();
    let omega = h.frequency(HYDROGEN_MASS);
    assert!((states[0].energy - omega / 2.0).abs() < 1e-4 * omega);
    for w in states.windows(2).take(5) {
        assert!(((w[1].energy - w[0].energy) / omega - 1.0).abs() < 1e-4);
    }
}

#[test]
fn ground_state_is_stationary() {
    let w = well(1.0);
    let model = QuantumModel::exact(&w);
    let grid = SpatialGrid::for_well(&w);
    let ground = &bound_states(&model, &grid).unwrap()[0];
    let psi0 = WaveFunction::new(grid, ground.amplitudes.iter().map(|&a| Complex64::new(a, 0.0)).collect()).unwrap();
    let (psi, traj) = propagate_tdse(&psi0, &FieldSignal::zero(0.0, 1e4), &model, DEFAULT_DT, 1000).unwrap();
    assert!((psi0.inner(&psi).norm() - 1.0).abs() < 1e-8);
    for r in &traj.rows {
        assert!((r.energy - ground.energy).abs() < 1e-9);
    }
}

#[test]
fn coherent_state_follows_the_classical_orbit() {
    let h = HarmonicWell { center: 0.0, stiffness: 0.02 };
    let m = HYDROGEN_MASS;
    let model = QuantumModel { potential: GridPotential::Harmonic(h), mass: m, charge: 1.0 };
    let grid = SpatialGrid::new(-4.0, 4.0, 512).unwrap();
    let s = GaussianState { x0: 0.8, ..h.ground_state(m) };
    let psi0 = init_gaussian_on_grid(&s, &grid).unwrap();
    let omega = h.frequency(m);
    let period = 2.0 * std::f64::consts::PI / omega;
    let (_, traj) = propagate_tdse(&psi0, &FieldSignal::zero(0.0, 2.0 * period), &model, 0.25, 20).unwrap();
    for r in &traj.rows {
        assert!((r.x_mean - 0.8 * (omega * r.t).cos()).abs() < 1e-6, "t {} x {}", r.t, r.x_mean);
        // the width breathes only at the splitting-error level
        assert!((r.x_var - traj.rows[0].x_var).abs() < 1e-6, "t {} var {} vs {}", r.t, r.x_var, traj.rows[0].x_var);
    }
}

#[test]
fn norm_is_preserved() {
    let w = well(1.0);
    let model = QuantumModel::exact(&w);
    let psi0 = init_gaussian_on_grid(&w.harmonic_ground_state(-2.0), &SpatialGrid::for_well(&w)).unwrap();
    let field = FieldSignal::sampled(0.0, 5000.0, 51, Interpolation::PiecewiseLinear, |t| 0.002 * (t / 300.0).sin()).unwrap();
    let (_, traj) = propagate_tdse(&psi0, &field, &model, DEFAULT_DT, 100).unwrap();
    for r in &traj.rows {
        assert!((r.norm - 1.0).abs() < 1e-10);
    }
}

#[test]
fn norm_drift_aborts() {
    let w = well(1.0);
    let model = QuantumModel::exact(&w);
    let mut psi0 = init_gaussian_on_grid(&w.harmonic_ground_state(-2.0), &SpatialGrid::for_well(&w)).unwrap();
    // non-finite amplitude: the norm cannot be kept
    psi0.amplitudes[10] = Complex64::new(f64::NAN, 0.0);
    let r = propagate_tdse(&psi0, &FieldSignal::zero(0.0, 10.0), &model, DEFAULT_DT, 1);
    assert!(matches!(r, Err(gaussctl::Error::NormDrift { .. })));
}

fn driven(dt: f64) -> WaveFunction {
    let w = well(1.0);
    let model = QuantumModel::exact(&w);
    let psi0 = init_gaussian_on_grid(&w.harmonic_ground_state(-2.0), &SpatialGrid::for_well(&w)).unwrap();
    let field = FieldSignal::sampled(0.0, 400.0, 9, Interpolation::PiecewiseLinear, |t| 0.01 * (t / 40.0).sin()).unwrap();
    propagate_tdse(&psi0, &field, &model, dt, usize::MAX).unwrap().0
}

#[test]
fn split_operator_is_second_order() {
    let reference = driven(2.0 / 16.0);
    let err = |dt: f64| {
        let psi = driven(dt);
        psi.amplitudes.iter().zip(&reference.amplitudes).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    };
    let ratio = err(2.0) / err(1.0);
    assert!((2.0..8.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn grid_refinement_leaves_observables_unchanged() {
    let w = well(1.0);
    let model = QuantumModel::exact(&w);
    let field = FieldSignal::sampled(0.0, 3000.0, 31, Interpolation::PiecewiseLinear, |t| 0.003 * (t / 250.0).sin()).unwrap();
    let run = |n: usize| {
        let grid = SpatialGrid::new(-12.0, 12.0, n).unwrap();
        let psi0 = init_gaussian_on_grid(&w.harmonic_ground_state(-2.0), &grid).unwrap();
        propagate_tdse(&psi0, &field, &model, DEFAULT_DT, 500).unwrap().1
    };
    let (a, b) = (run(1024), run(2048));
    for (r, s) in a.rows.iter().zip(&b.rows) {
        for (u, v) in [(r.x_mean, s.x_mean), (r.x_var, s.x_var), (r.p_mean, s.p_mean), (r.energy, s.energy)] {
            assert!((u - v).abs() < 1e-6, "t {}: {u} vs {v}", r.t);
        }
    }
}

#[test]
fn gaussian_model_is_exact_for_a_harmonic_well() {
    let h = HarmonicWell { center: 0.3, stiffness: 0.01 };
    let m = 2.0 * HYDROGEN_MASS;
    let gm = GaussianModel { potential: AveragedPotential::Harmonic(h), mass: m, charge: 1.0 };
    let qm = QuantumModel::from_gaussian_model(&gm);
    // squeezed, chirped and moving
    let s0 = GaussianState { alpha: 5.0, beta: 1.0, x0: -0.5, p0: 3.0 };
    let field =
        FieldSignal::new(vec![0.0, 500.0, 1200.0, 2000.0], vec![0.0, 0.004, -0.003, 0.001], Interpolation::PiecewiseLinear).unwrap();
    let grid = SpatialGrid::new(-6.0, 6.0, 1024).unwrap();
    let psi0 = init_gaussian_on_grid(&s0, &grid).unwrap();
    let (_, q) = propagate_tdse(&psi0, &field, &qm, 0.1, 500).unwrap();
    let g = propagate_gaussian(&gm, &s0, &field, 0.0, 2000.0, 0.05).unwrap();
    for r in &q.rows {
        let k = (r.t / 0.05).round() as usize;
        let s = g.states[k];
        assert!((g.times[k] - r.t).abs() < 1e-9);
        assert!((r.x_mean - s.x0).abs() < 1e-4, "t {}", r.t);
        assert!((r.p_mean - s.p0).abs() < 1e-4, "t {}", r.t);
        assert!((r.x_var - s.position_variance()).abs() < 1e-4, "t {}", r.t);
    }
}

#[test]
fn ehrenfest_force_balance() {
    let w = well(1.0);
    let model = QuantumModel::exact(&w);
    let grid = SpatialGrid::for_well(&w);
    let psi0 = init_gaussian_on_grid(&GaussianState { p0: 4.0, ..w.harmonic_ground_state(-2.0) }, &grid).unwrap();
    let e = 0.004;
    let field = FieldSignal::constant(0.0, 500.0, e);
    let dt = 0.05;
    let mut force = Vec::new();
    let (_, traj) = propagate_tdse_observed(&psi0, &field, &model, dt, 1, |_, psi| {
        // <-V'(x)> + q E
        let f: f64 = psi
            .grid
            .points()
            .iter()
            .zip(&psi.amplitudes)
            .map(|(&x, a)| {
                let r = x / w.barrier_distance;
                -4.0 * w.barrier_height * (r * r - 1.0) * r / w.barrier_distance * a.norm_sqr()
            })
            .sum::<f64>()
            * psi.grid.dx();
        force.push(f + w.charge * e);
    })
    .unwrap();
    let rows = &traj.rows;
    for i in (1..rows.len() - 1).step_by(250) {
        let dpdt = (rows[i + 1].p_mean - rows[i - 1].p_mean) / (2.0 * dt);
        assert!((dpdt - force[i]).abs() <= 1e-4 * force[i].abs(), "t {}: {dpdt} vs {}", rows[i].t, force[i]);
    }
}

#[test]
fn free_spreading_matches_the_analytic_law() {
    let m = HYDROGEN_MASS;
    let free = QuantumModel {
        potential: GridPotential::Harmonic(HarmonicWell { center: 0.0, stiffness: 0.0 }),
        mass: m,
        charge: 0.0,
    };
    let s0 = GaussianState { alpha: 4.0, beta: 0.5, x0: 0.0, p0: 0.0 };
    let grid = SpatialGrid::new(-8.0, 8.0, 1024).unwrap();
    let psi0 = init_gaussian_on_grid(&s0, &grid).unwrap();
    let mut checked = 0;
    propagate_tdse_observed(&psi0, &FieldSignal::zero(0.0, 1000.0), &free, 1.0, 100, |t, psi| {
        let a0 = Complex64::new(s0.alpha, s0.beta);
        let a = 1.0 / (1.0 / a0 + Complex64::new(0.0, 2.0 * t / m));
        let r = reduce_to_gaussian(psi);
        assert!((r.alpha - a.re).abs() < 1e-6, "t {t}: {} vs {}", r.alpha, a.re);
        assert!((r.beta - a.im).abs() < 1e-6, "t {t}: {} vs {}", r.beta, a.im);
        checked += 1;
    })
    .unwrap();
    assert_eq!(checked, 11);
}
