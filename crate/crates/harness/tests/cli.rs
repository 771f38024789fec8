use std::path::Path;
use std::process::Command;

use gaussctl::dynamics::{FieldSignal, Interpolation};
use gaussctl::potential::{AveragedPotential, HarmonicWell};
use gaussctl::qprop::QuantumModel;
use gaussctl_harness::config::{ExperimentConfig, Preset};
use gaussctl_harness::experiments::*;
use gaussctl_harness::figures::{emit_figure_data, Figure};

const TINY: &str = r#"
[problem]
tf = 3000.0
[mesh]
nodes = 61
[guess]
restarts = 1
[replay]
stride = 50
[replay.grid]
points = 256
[scan]
masses = [1.0, 2.0]
final_times = [2000.0, 3000.0]
"#;

fn tiny() -> ExperimentConfig {
    ExperimentConfig::from_toml(Preset::Desk, TINY).unwrap()
}

fn gaussctl(dir: &Path, args: &[&str]) -> std::process::Output {
    let cfg = dir.join("tiny.toml");
    if !cfg.exists() {
        std::fs::write(&cfg, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_gaussctl"))
        .args(["--preset", "desk", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn files_under(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                out.extend(files_under(&p));
            } else {
                out.push(p);
            }
        }
    }
    out
}

#[test]
fn zero_horizon_is_rejected_before_solving() {
    let mut cfg = tiny();
    cfg.problem.tf = cfg.problem.t0;
    assert!(solve_seeded(&cfg, 1.0, cfg.problem.tf, 0.0, 0).is_err());
    cfg.problem.tf = 5.0;
    let err = solve_seeded(&cfg, 1.0, cfg.problem.tf, 0.0, 0).unwrap_err();
    assert!(err.to_string().contains("10 nodes"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[problem]\ntf = 0.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gaussctl"))
        .arg("--config")
        .arg(dir.path().join("bad.toml"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("optimize")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn plot_without_results_names_the_missing_run() {
    let dir = tempfile::tempdir().unwrap();
    for (fig, run) in [("fig2", "discretization-study"), ("fig3", "optimize"), ("fig4", "replay"), ("fig5", "scan")] {
        let out = gaussctl(dir.path(), &["plot", fig]);
        assert_eq!(out.status.code(), Some(1));
        let msg = String::from_utf8_lossy(&out.stderr);
        assert!(msg.contains(run), "{fig}: {msg}");
        assert!(files_under(&dir.path().join("out")).is_empty(), "{fig} left files behind");
    }
}

#[test]
fn eigenstate_ladders_and_figure() {
    let dir = tempfile::tempdir().unwrap();
    let out = gaussctl(dir.path(), &["eigenstates"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("m = 1: 8 sub-barrier states"), "{text}");
    assert!(text.contains("m = 5: 16 sub-barrier states"), "{text}");
    let (csv, svg) = emit_figure_data(&tiny(), &dir.path().join("out"), Figure::Fig1).unwrap();
    assert!(std::fs::read_to_string(svg).unwrap().trim_end().ends_with("</svg>"));
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 1 + 8 + 16);
}

#[test]
fn scan_is_independent_of_worker_count() {
    let cfg = tiny();
    let one = run_scan(&cfg, 1).unwrap();
    let two = run_scan(&cfg, 2).unwrap();
    assert_eq!(one, two);
    assert_eq!(one.len(), 4);
    assert_eq!((one[1].mass, one[1].tf), (1.0, 3000.0));
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_scan_csv(&one, &mut a).unwrap();
    write_scan_csv(&two, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn optimize_replay_is_byte_reproducible() {
    let read = |dir: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = files_under(dir)
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "gwf"))
            .map(|p| (p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        for cmd in ["optimize", "replay"] {
            let out = gaussctl(dir.path(), &[cmd, "--seed", "4"]);
            assert!(out.status.code() != Some(1), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
        runs.push(read(&dir.path().join("out")));
    }
    assert!(runs[0].len() >= 6);
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn net_force_vanishes_by_independent_quadrature() {
    let mut cfg = tiny();
    cfg.problem.mass = 5.0;
    let s = solve_seeded(&cfg, 5.0, 3000.0, 0.0, 1).unwrap();
    assert!(s.converged(), "{:?}", s.report);
    assert!(net_force_gauss(&s.solution, &s.mesh).abs() <= 1e-6);
}

#[test]
fn harmonic_replay_agrees_with_the_gaussian() {
    // in a harmonic well the thawed Gaussian is exact, so the grid replay
    // must reproduce it under any field
    let mut cfg = tiny();
    cfg.replay.grid.points = 1024;
    cfg.replay.stride = 10;
    let mut prob = cfg.control_problem_for(1.0, 2000.0, 0.0).unwrap();
    let well = HarmonicWell { center: -2.0, stiffness: 0.02 };
    prob.model.potential = AveragedPotential::Harmonic(well);
    prob.s_init = well.ground_state(prob.model.mass);
    let field = FieldSignal::sampled(0.0, 2000.0, 81, Interpolation::PiecewiseCubic, |t| 0.01 * (t / 150.0).sin()).unwrap();
    let qm = QuantumModel::from_gaussian_model(&prob.model);
    let r = replay_models(&cfg, &prob, &qm, 2.0, &field).unwrap();
    assert!(r.quantum.rows.len() > 10);
    for (q, g) in r.quantum.rows.iter().zip(&r.paired) {
        assert!((q.x_mean - g.x0).abs() < 1e-4, "t {}: {} vs {}", q.t, q.x_mean, g.x0);
        assert!((q.p_mean - g.p0).abs() < 1e-4, "t {}: {} vs {}", q.t, q.p_mean, g.p0);
        assert!((q.x_var - g.position_variance()).abs() < 1e-4, "t {}", q.t);
    }
    // the field really moved it
    assert!(r.paired.iter().map(|g| (g.x0 + 2.0).abs()).fold(0.0, f64::max) > 0.1);
}
