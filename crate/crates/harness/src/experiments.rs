//! The experiment drivers behind the CLI subcommands.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use gaussctl::dynamics::{propagate_gaussian, FieldSignal, GaussianTrajectory, Interpolation};
use gaussctl::nlp::{SolveReport, SolveStatus};
use gaussctl::potential::{gaussian_overlap, GaussianState};
use gaussctl::qprop::{
    bound_states, err_metric, init_gaussian_on_grid, propagate_tdse, write_eigen_csv, BoundState, QuantumModel,
    QuantumTrajectory, WaveFunction,
};
use gaussctl::transcription::{epsilon_disc, initial_guess, optimize, ControlProblem, DecisionVector, Mesh, Scheme};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{check_horizon, ExperimentConfig};
use crate::output::{atomic_write, write_summary};

/// Directory name for one `(mass, tf, eta)` run.
pub fn run_label(mass: f64, tf: f64, eta: f64) -> String {
    if eta == 0.0 {
        format!("m{mass}_tf{tf}")
    } else {
        format!("m{mass}_tf{tf}_eta{eta}")
    }
}

/// Field signal used for every replay of a collocation solution.
pub fn replay_field(solution: &DecisionVector, mesh: &Mesh) -> Result<FieldSignal> {
    Ok(solution.field_signal(mesh, Interpolation::PiecewiseCubic)?)
}

/// `int E dt` by three-point Gauss-Legendre on each interval's own control
/// interpolant. Independent of the Simpson/trapezoid weights in the NLP row.
pub fn net_force_gauss(solution: &DecisionVector, mesh: &Mesh) -> f64 {
    let t = mesh.node_times();
    let nodes = [-(0.6f64).sqrt(), 0.0, (0.6f64).sqrt()];
    let weights = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let mut total = 0.0;
    for k in 0..t.len() - 1 {
        let h = t[k + 1] - t[k];
        let (ea, eb) = (solution.field(k), solution.field(k + 1));
        let mid = solution.midpoint_controls.get(k).copied();
        let mut sum = 0.0;
        for (xi, w) in nodes.iter().zip(weights) {
            let u = 0.5 * (xi + 1.0);
            let e = match mid {
                None => ea + (eb - ea) * u,
                Some(em) => ea * (2.0 * u - 1.0) * (u - 1.0) + em * 4.0 * u * (1.0 - u) + eb * u * (2.0 * u - 1.0),
            };
            sum += w * e;
        }
        total += 0.5 * h * sum;
    }
    total
}

/// One seeded transcription and solve.
#[derive(Debug, Clone)]
pub struct Solve {
    /// Mass in config units.
    pub mass: f64,
    pub problem: ControlProblem,
    pub mesh: Mesh,
    pub seed: u64,
    pub guess: DecisionVector,
    pub solution: DecisionVector,
    pub report: SolveReport,
}

impl Solve {
    pub fn converged(&self) -> bool {
        self.report.converged()
    }
}

pub fn solve_seeded(cfg: &ExperimentConfig, mass: f64, tf: f64, eta: f64, seed: u64) -> Result<Solve> {
    check_horizon(cfg.problem.t0, tf)?;
    solve_on(cfg, mass, cfg.control_problem_for(mass, tf, eta)?, cfg.mesh_for(tf)?, seed)
}

fn solve_on(cfg: &ExperimentConfig, mass: f64, problem: ControlProblem, mesh: Mesh, seed: u64) -> Result<Solve> {
    let guess = initial_guess(&problem, &mesh, seed, cfg.guess.amplitude);
    let (solution, report) = optimize(&problem, &mesh, &guess, &cfg.solver)?;
    Ok(Solve { mass, problem, mesh, seed, guess, solution, report })
}

/// `restarts` seeded solves from `seed, seed + 1, ...`; the lowest objective
/// among converged runs wins, otherwise the lowest violation.
pub fn solve_with_restarts(cfg: &ExperimentConfig, mass: f64, tf: f64, eta: f64) -> Result<Solve> {
    let mut best: Option<Solve> = None;
    let mut last_err = None;
    for r in 0..cfg.guess.restarts as u64 {
        match solve_seeded(cfg, mass, tf, eta, cfg.seed + r) {
            Ok(s) => {
                let better = match &best {
                    None => true,
                    Some(b) => match (s.converged(), b.converged()) {
                        (true, false) => true,
                        (false, true) => false,
                        (true, true) => s.report.final_objective < b.report.final_objective,
                        (false, false) => s.report.max_constraint_violation < b.report.max_constraint_violation,
                    },
                };
                if better {
                    best = Some(s);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => bail!("no restarts requested"),
    }
}

/// What `optimize` reports besides the files it writes.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub dir: PathBuf,
    pub solve: Solve,
    pub epsilon_disc: Option<f64>,
    /// Independent quadrature of the optimized field.
    pub net_force: f64,
    pub final_state: GaussianState,
    pub initial_state: GaussianState,
}

impl OptimizeOutcome {
    pub fn converged(&self) -> bool {
        self.solve.converged()
    }
}

pub fn optimize_dir(out: &Path, mass: f64, tf: f64, eta: f64) -> PathBuf {
    out.join("optimize").join(run_label(mass, tf, eta))
}

/// Solve the configured problem from the seeded guess and write the guess,
/// solution, report, iteration trace, Gaussian replay and a summary.
pub fn run_optimize(cfg: &ExperimentConfig, out: &Path) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    let p = &cfg.problem;
    let solve = solve_seeded(cfg, p.mass, p.tf, p.eta, cfg.seed)?;
    write_optimize(cfg, out, solve)
}

pub fn write_optimize(cfg: &ExperimentConfig, out: &Path, solve: Solve) -> Result<OptimizeOutcome> {
    let prob = &solve.problem;
    let dir = optimize_dir(out, solve.mass, prob.tf, prob.eta);
    std::fs::create_dir_all(&dir)?;
    let eps = epsilon_disc(&solve.solution, prob, &solve.mesh).ok();
    let net_force = net_force_gauss(&solve.solution, &solve.mesh);
    let field = replay_field(&solve.solution, &solve.mesh)?;
    let replay = propagate_gaussian(&prob.model, &prob.s_init, &field, prob.t0, prob.tf, cfg.replay.dt)?;

    atomic_write(&dir.join("guess.csv"), |w| Ok(solve.guess.write_csv(&solve.mesh, w)?))?;
    atomic_write(&dir.join("solution.csv"), |w| Ok(solve.solution.write_csv(&solve.mesh, w)?))?;
    atomic_write(&dir.join("report.json"), |w| Ok(w.write_all(solve.report.to_json().as_bytes())?))?;
    atomic_write(&dir.join("trace.csv"), |w| Ok(solve.report.write_trace_csv(w)?))?;
    let thinned = thin(&replay, cfg.replay.stride);
    atomic_write(&dir.join("gaussian.csv"), |w| Ok(thinned.write_csv(&prob.model, w)?))?;

    let s_f = solve.solution.final_state();
    let s_0 = solve.solution.state(0);
    write_summary(
        &dir.join("summary.txt"),
        &[
            ("mass", format!("{}", solve.mass)),
            ("tf", format!("{}", prob.tf)),
            ("eta", format!("{}", prob.eta)),
            ("seed", solve.seed.to_string()),
            ("scheme", scheme_name(solve.mesh.scheme()).into()),
            ("nodes", solve.mesh.n_nodes().to_string()),
            ("status", status_name(solve.report.status).into()),
            ("objective", format!("{:e}", solve.report.final_objective)),
            ("max_violation", format!("{:e}", solve.report.max_constraint_violation)),
            ("kkt", format!("{:e}", solve.report.kkt_residual)),
            ("epsilon_disc", eps.map_or("nan".into(), |e| format!("{e:e}"))),
            ("net_force", format!("{net_force:e}")),
            ("final_x0", format!("{:e}", s_f.x0)),
            ("final_overlap", format!("{:e}", gaussian_overlap(&s_f, &prob.s_target))),
            ("replay_final_x0", format!("{:e}", replay.last().x0)),
        ],
    )?;
    Ok(OptimizeOutcome { dir, epsilon_disc: eps, net_force, final_state: s_f, initial_state: s_0, solve })
}

fn thin(traj: &GaussianTrajectory, stride: usize) -> GaussianTrajectory {
    let keep: Vec<usize> = (0..traj.times.len()).filter(|k| k % stride == 0 || *k + 1 == traj.times.len()).collect();
    GaussianTrajectory {
        times: keep.iter().map(|&k| traj.times[k]).collect(),
        states: keep.iter().map(|&k| traj.states[k]).collect(),
        fields: keep.iter().map(|&k| traj.fields[k]).collect(),
    }
}

pub fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Trapezoidal => "trapezoidal",
        Scheme::HermiteSimpson => "hermite-simpson",
    }
}

pub fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max-iter",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::NumericFailure => "numeric-failure",
    }
}

/// Quantum and Gaussian dynamics under one field, paired in time.
#[derive(Debug, Clone)]
pub struct Replay {
    pub quantum: QuantumTrajectory,
    pub gaussian: GaussianTrajectory,
    /// Gaussian states at the quantum sample times.
    pub paired: Vec<GaussianState>,
    pub psi_final: WaveFunction,
    pub summary: ReplaySummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    /// `|x0_target - <x>(tf)| / x_B`.
    pub err: f64,
    /// `|<phi_target|psi(tf)>|^2`.
    pub overlap: f64,
    /// First time the Gaussian centre reaches the barrier top, if it does.
    pub crossing_time: Option<f64>,
    /// Largest `|<x> - x0| / x_B` up to the crossing (whole run without one).
    pub tracking_error: f64,
    /// Largest quantum minus Gaussian variance after the crossing (a0^2).
    pub variance_excess: f64,
    pub final_x_mean: f64,
    pub final_x0: f64,
}

pub fn replay(cfg: &ExperimentConfig, mass: f64, prob: &ControlProblem, field: &FieldSignal) -> Result<Replay> {
    let well = cfg.well_for(mass)?;
    replay_models(cfg, prob, &QuantumModel::exact(&well), well.barrier_distance, field)
}

/// Replay with an explicit grid model; `x_b` normalises the error measures.
pub fn replay_models(
    cfg: &ExperimentConfig,
    prob: &ControlProblem,
    qm: &QuantumModel,
    xb: f64,
    field: &FieldSignal,
) -> Result<Replay> {
    let grid = cfg.replay_grid()?;
    let psi0 = init_gaussian_on_grid(&prob.s_init, &grid)?;
    let (psi_final, quantum) = propagate_tdse(&psi0, field, qm, cfg.replay.dt, cfg.replay.stride)?;
    let gaussian = propagate_gaussian(&prob.model, &prob.s_init, field, prob.t0, prob.tf, cfg.replay.dt)?;
    let paired: Vec<GaussianState> = quantum.rows.iter().map(|r| gaussian.states[nearest(&gaussian.times, r.t)]).collect();

    let crossing_time = gaussian.times.iter().zip(&gaussian.states).find(|(_, s)| s.x0 >= 0.0).map(|(t, _)| *t);
    let before = |t: f64| crossing_time.is_none_or(|tc| t <= tc);
    let mut tracking_error: f64 = 0.0;
    let mut variance_excess = f64::NEG_INFINITY;
    for (r, s) in quantum.rows.iter().zip(&paired) {
        if before(r.t) {
            tracking_error = tracking_error.max((r.x_mean - s.x0).abs() / xb);
        } else {
            variance_excess = variance_excess.max(r.x_var - s.position_variance());
        }
    }
    let target = init_gaussian_on_grid(&prob.s_target, &grid)?;
    let overlap = target.inner(&psi_final).norm_sqr();
    let summary = ReplaySummary {
        err: err_metric(&psi_final, prob.s_target.x0, xb),
        overlap: overlap.clamp(0.0, 1.0),
        crossing_time,
        tracking_error,
        variance_excess,
        final_x_mean: psi_final.x_mean(),
        final_x0: gaussian.last().x0,
    };
    Ok(Replay { quantum, gaussian, paired, psi_final, summary })
}

fn nearest(times: &[f64], t: f64) -> usize {
    let i = times.partition_point(|&s| s < t);
    if i == 0 {
        0
    } else if i == times.len() || (t - times[i - 1]) <= (times[i] - t) {
        i - 1
    } else {
        i
    }
}

pub fn replay_dir(out: &Path, mass: f64, tf: f64, eta: f64) -> PathBuf {
    out.join("replay").join(run_label(mass, tf, eta))
}

/// Replay the stored solution of the configured problem through both
/// models and write the paired series, the final wavefunction and a summary.
pub fn run_replay(cfg: &ExperimentConfig, out: &Path) -> Result<(PathBuf, ReplaySummary)> {
    cfg.validate()?;
    let p = &cfg.problem;
    let src = optimize_dir(out, p.mass, p.tf, p.eta).join("solution.csv");
    if !src.exists() {
        bail!("no solution at {}; run `gaussctl optimize` with the same config first", src.display());
    }
    let prob = cfg.control_problem()?;
    let (times, solution) = DecisionVector::read_csv(std::fs::File::open(&src)?)
        .with_context(|| format!("reading {}", src.display()))?;
    let mesh = Mesh::new(
        if solution.midpoint_controls.is_empty() { Scheme::Trapezoidal } else { Scheme::HermiteSimpson },
        times.len(),
        times[0],
        *times.last().unwrap(),
    )?;
    let field = replay_field(&solution, &mesh)?;
    let r = replay(cfg, p.mass, &prob, &field)?;

    let dir = replay_dir(out, p.mass, p.tf, p.eta);
    std::fs::create_dir_all(&dir)?;
    atomic_write(&dir.join("quantum.csv"), |w| Ok(r.quantum.write_csv(w)?))?;
    atomic_write(&dir.join("comparison.csv"), |w| write_comparison(&r, w))?;
    atomic_write(&dir.join("psi_final.gwf"), |w| Ok(r.psi_final.write_snapshot(prob.tf, w)?))?;
    let s = &r.summary;
    write_summary(
        &dir.join("summary.txt"),
        &[
            ("err", format!("{:e}", s.err)),
            ("overlap", format!("{:e}", s.overlap)),
            ("crossing_time", s.crossing_time.map_or("none".into(), |t| format!("{t}"))),
            ("tracking_error", format!("{:e}", s.tracking_error)),
            ("variance_excess", format!("{:e}", s.variance_excess)),
            ("final_x_mean", format!("{:e}", s.final_x_mean)),
            ("final_x0", format!("{:e}", s.final_x0)),
        ],
    )?;
    Ok((dir, r.summary))
}

fn write_comparison(r: &Replay, w: &mut dyn std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["t", "x_quantum", "x_gaussian", "var_quantum", "var_gaussian", "p_quantum", "p_gaussian"])?;
    for (q, g) in r.quantum.rows.iter().zip(&r.paired) {
        w.write_record(
            [q.t, q.x_mean, g.x0, q.x_var, g.position_variance(), q.p_mean, g.p0].iter().map(|v| format!("{v:e}")),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One `(mass, tf)` cell of a validity scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    pub mass: f64,
    pub tf: f64,
    /// `None` when the cell failed before a replay.
    pub err: Option<f64>,
    pub overlap: Option<f64>,
    pub solver_status: String,
    pub eta_used: f64,
    pub seed_used: Option<u64>,
    pub objective: Option<f64>,
}

fn scan_cell(cfg: &ExperimentConfig, mass: f64, tf: f64, eta: f64) -> ScanCell {
    let mut cell =
        ScanCell { mass, tf, err: None, overlap: None, solver_status: String::new(), eta_used: eta, seed_used: None, objective: None };
    let result = solve_with_restarts(cfg, mass, tf, eta).and_then(|s| {
        cell.solver_status = status_name(s.report.status).into();
        cell.seed_used = Some(s.seed);
        cell.objective = Some(s.report.final_objective);
        let field = replay_field(&s.solution, &s.mesh)?;
        replay(cfg, mass, &s.problem, &field)
    });
    match result {
        Ok(r) => {
            cell.err = Some(r.summary.err);
            cell.overlap = Some(r.summary.overlap);
        }
        Err(e) => {
            if cell.solver_status.is_empty() {
                cell.solver_status = "error".into();
            }
            cell.solver_status = format!("{} ({e})", cell.solver_status);
        }
    }
    cell
}

/// Every `(mass, tf)` cell in row-major order (masses outer), solved and
/// replayed on `workers` threads.
pub fn run_scan(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<ScanCell>> {
    run_scan_with(cfg, workers, |_, _| {})
}

/// [`run_scan`] calling `progress` with each finished cell and its wall time.
pub fn run_scan_with(
    cfg: &ExperimentConfig,
    workers: usize,
    progress: impl Fn(&ScanCell, std::time::Duration) + Sync,
) -> Result<Vec<ScanCell>> {
    let scan = cfg.validate_scan()?;
    let jobs: Vec<(f64, f64, f64)> = scan
        .masses
        .iter()
        .flat_map(|&m| scan.final_times.iter().map(move |&tf| (m, tf)))
        .map(|(m, tf)| (m, tf, scan.eta_for(m, tf, cfg.problem.eta)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(m, tf, eta)| {
                let start = std::time::Instant::now();
                let cell = scan_cell(cfg, m, tf, eta);
                progress(&cell, start.elapsed());
                cell
            })
            .collect()
    }))
}

pub fn scan_csv_path(out: &Path, eta: f64) -> PathBuf {
    out.join("scan").join(format!("scan_eta{eta}.csv"))
}

pub fn write_scan_csv(cells: &[ScanCell], w: &mut dyn std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["mass", "tf", "err", "overlap", "solver_status", "eta_used", "seed_used", "objective"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
    for c in cells {
        w.write_record([
            format!("{}", c.mass),
            format!("{}", c.tf),
            opt(c.err),
            opt(c.overlap),
            c.solver_status.clone(),
            format!("{}", c.eta_used),
            c.seed_used.map_or(String::new(), |s| s.to_string()),
            opt(c.objective),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scan_csv(path: &Path) -> Result<Vec<ScanCell>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let opt = |s: &str| -> Result<Option<f64>> { Ok(if s.is_empty() { None } else { Some(s.parse()?) }) };
    let mut cells = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        cells.push(ScanCell {
            mass: rec[0].parse()?,
            tf: rec[1].parse()?,
            err: opt(&rec[2])?,
            overlap: opt(&rec[3])?,
            solver_status: rec[4].to_string(),
            eta_used: rec[5].parse()?,
            seed_used: if rec[6].is_empty() { None } else { Some(rec[6].parse()?) },
            objective: opt(&rec[7])?,
        });
    }
    Ok(cells)
}

/// Harmonic period `T = 2 pi sqrt(m / V'')` at the well minima.
pub fn harmonic_period(cfg: &ExperimentConfig, mass: f64) -> Result<f64> {
    Ok(cfg.well_for(mass)?.harmonic_period())
}

/// Reference curve `tf = factor * T(m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCurve {
    /// `(2n+1)/2` for odd half-periods, `n` for whole periods.
    pub factor: f64,
    pub odd_half: bool,
}

/// `(2n+1)T/2` for n = 1, 2, 3 and `nT` for n = 2, 3.
pub fn reference_curves() -> Vec<ReferenceCurve> {
    let odd = (1..=3).map(|n| ReferenceCurve { factor: (2 * n + 1) as f64 / 2.0, odd_half: true });
    let whole = (2..=3).map(|n| ReferenceCurve { factor: n as f64, odd_half: false });
    odd.chain(whole).collect()
}

/// Mean Err of the cells within `window` a.u. of any odd-half-period curve
/// and of any whole-period curve, with the cell counts.
pub fn stripe_means(cfg: &ExperimentConfig, cells: &[ScanCell], window: f64) -> Result<((f64, usize), (f64, usize))> {
    let curves = reference_curves();
    let mut acc = [(0.0, 0usize); 2];
    for c in cells {
        let Some(err) = c.err else { continue };
        let t = harmonic_period(cfg, c.mass)?;
        for (slot, odd) in [(0, true), (1, false)] {
            if curves.iter().filter(|r| r.odd_half == odd).any(|r| (c.tf - r.factor * t).abs() <= window) {
                acc[slot].0 += err;
                acc[slot].1 += 1;
            }
        }
    }
    let mean = |(s, n): (f64, usize)| (if n == 0 { f64::NAN } else { s / n as f64 }, n);
    Ok((mean(acc[0]), mean(acc[1])))
}

pub fn median_err(cells: &[ScanCell]) -> f64 {
    let mut v: Vec<f64> = cells.iter().filter_map(|c| c.err).collect();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// One row of the discretization study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub scheme: Scheme,
    pub nodes: usize,
    pub epsilon_disc: Option<f64>,
    pub wall_time: Duration,
    pub status: String,
}

/// Optimize the configured problem for every scheme and node count and
/// tabulate the discretization error and the solve time.
pub fn run_discretization_study(cfg: &ExperimentConfig, nodes: &[usize]) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    if nodes.is_empty() {
        bail!("the node list is empty");
    }
    let prob = cfg.control_problem()?;
    let mut rows = Vec::new();
    for &scheme in &cfg.study.schemes {
        for &n in nodes {
            let start = Instant::now();
            let result = Mesh::new(scheme, n, prob.t0, prob.tf)
                .map_err(anyhow::Error::from)
                .and_then(|mesh| solve_on(cfg, cfg.problem.mass, prob.clone(), mesh, cfg.seed));
            let wall_time = start.elapsed();
            rows.push(match result {
                Ok(s) => StudyRow {
                    scheme,
                    nodes: n,
                    epsilon_disc: epsilon_disc(&s.solution, &s.problem, &s.mesh).ok(),
                    wall_time: s.report.wall_time,
                    status: status_name(s.report.status).into(),
                },
                Err(e) => StudyRow { scheme, nodes: n, epsilon_disc: None, wall_time, status: format!("error ({e})") },
            });
        }
    }
    Ok(rows)
}

pub fn study_csv_path(out: &Path) -> PathBuf {
    out.join("study").join("discretization.csv")
}

pub fn write_study_csv(rows: &[StudyRow], w: &mut dyn std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["scheme", "nodes", "epsilon_disc", "wall_time", "status"])?;
    for r in rows {
        w.write_record([
            scheme_name(r.scheme).to_string(),
            r.nodes.to_string(),
            r.epsilon_disc.map_or(String::new(), |e| format!("{e:e}")),
            format!("{:.3}", r.wall_time.as_secs_f64()),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn eigen_csv_path(out: &Path, mass: f64) -> PathBuf {
    out.join("eigen").join(format!("m{mass}.csv"))
}

/// Sub-barrier states for every configured mass.
pub fn run_eigenstates(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<(f64, Vec<BoundState>)>> {
    cfg.validate()?;
    let grid = cfg.eigen_grid()?;
    let mut all = Vec::new();
    for &m in &cfg.eigen.masses {
        let states = bound_states(&QuantumModel::exact(&cfg.well_for(m)?), &grid)?;
        let path = eigen_csv_path(out, m);
        std::fs::create_dir_all(path.parent().unwrap())?;
        atomic_write(&path, |w| Ok(write_eigen_csv(&states, w)?))?;
        all.push((m, states));
    }
    Ok(all)
}
