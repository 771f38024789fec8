use gaussctl::nlp::{kkt_residual, Nlp, SolverOptions};
use gaussctl::potential::{GaussianState, QuarticDoubleWell};
use gaussctl::transcription::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chirp(t: f64) -> f64 {
    0.004 * (t / 300.0).sin() * (t / 1100.0).cos()
}

/// Nodes that satisfy the trapezoidal defects exactly for a prescribed field,
/// marched forward by fixed-point iteration on each implicit step.
fn trapezoid_march(prob: &ControlProblem, mesh: &Mesh) -> DecisionVector {
    let t = mesh.node_times();
    let h = mesh.step();
    let mut nodes = Vec::with_capacity(5 * t.len());
    let mut s = prob.s_init;
    nodes.extend(s.to_array());
    nodes.push(chirp(t[0]));
    for k in 0..t.len() - 1 {
        let (ea, eb) = (chirp(t[k]), chirp(t[k + 1]));
        let fa = prob.model.eom_rhs(&s, ea);
        let mut next = s;
        for _ in 0..200 {
            let fb = prob.model.eom_rhs(&next, eb);
            let a = s.to_array();
            let mut v = [0.0; 4];
            for i in 0..4 {
                v[i] = a[i] + 0.5 * h * (fa[i] + fb[i]);
            }
            let cand = GaussianState { alpha: v[0], beta: v[1], x0: v[2], p0: v[3] };
            let moved = cand.to_array().iter().zip(next.to_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            next = cand;
            if moved < 1e-15 {
                break;
            }
        }
        s = next;
        nodes.extend(s.to_array());
        nodes.push(eb);
    }
    DecisionVector { nodes, midpoint_controls: vec![] }
}

#[test]
fn trapezoidal_epsilon_disc_refines_with_the_local_order() {
    let prob = ControlProblem::well_transfer(&QuarticDoubleWell::default(), 4000.0);
    let eps = |n: usize| {
        let mesh = Mesh::new(Scheme::Trapezoidal, n, 0.0, 4000.0).unwrap();
        let dv = trapezoid_march(&prob, &mesh);
        assert!(build_nlp(&prob, &mesh).unwrap().max_scaled_defect(&dv).unwrap() < 1e-12);
        epsilon_disc(&dv, &prob, &mesh).unwrap()
    };
    // per-interval error of a second-order rule shrinks like h^3
    let (a, b, c) = (eps(101), eps(201), eps(401));
    for r in [a / b, b / c] {
        assert!((4.0..16.0).contains(&r), "ratio {r}");
    }
}

#[test]
fn kkt_residual_discriminates_random_points() {
    let tol = SolverOptions::default().optimality_tol;
    for scheme in [Scheme::Trapezoidal, Scheme::HermiteSimpson] {
        let prob = ControlProblem::well_transfer(&QuarticDoubleWell::default(), 20000.0);
        let mesh = Mesh::new(scheme, 60, 0.0, 20000.0).unwrap();
        let nlp = build_nlp(&prob, &mesh).unwrap();
        let (lo, hi) = nlp.variable_bounds();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(&l, &u)| l + (u - l) * rng.random_range(0.05..0.95)).collect();
            let y = vec![0.0; nlp.num_constraints()];
            assert!(kkt_residual(&nlp, &x, &y) > tol);
        }
    }
}

#[test]
fn hermite_simpson_beats_trapezoidal_on_the_same_field() {
    // same prescribed field, accurately integrated nodes: compare the defect
    // each rule leaves, which is what the collocation solve drives to zero
    let prob = ControlProblem::well_transfer(&QuarticDoubleWell::default(), 4000.0);
    for n in [201, 401] {
        let tr = Mesh::new(Scheme::Trapezoidal, n, 0.0, 4000.0).unwrap();
        let hs = Mesh::new(Scheme::HermiteSimpson, n, 0.0, 4000.0).unwrap();
        let t = tr.node_times().to_vec();
        let fields: Vec<f64> = t.iter().map(|&t| chirp(t)).collect();
        let mids: Vec<f64> = t.windows(2).map(|w| chirp(0.5 * (w[0] + w[1]))).collect();
        let a = integrate_on_mesh(&prob, &tr, &fields, &[]).unwrap();
        let b = integrate_on_mesh(&prob, &hs, &fields, &mids).unwrap();
        let da = build_nlp(&prob, &tr).unwrap().max_scaled_defect(&a).unwrap();
        let db = build_nlp(&prob, &hs).unwrap().max_scaled_defect(&b).unwrap();
        assert!(db < da, "n {n}: {db} vs {da}");
    }
}
