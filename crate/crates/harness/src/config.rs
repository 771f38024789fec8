//! Experiment configuration: TOML files layered over a named preset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gaussctl::nlp::SolverOptions;
use gaussctl::potential::{QuarticDoubleWell, HYDROGEN_MASS};
use gaussctl::qprop::SpatialGrid;
use gaussctl::transcription::{ControlProblem, Mesh, Scheme, StateBounds};
use serde::{Deserialize, Serialize};

/// Shortest node spacing a mesh may have (a.u.). A horizon shorter than ten
/// of these is rejected before anything is built.
pub const MIN_NODE_SPACING: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Full grids: N = 2000, 10 masses x 16 final times.
    #[default]
    Paper,
    /// Halved scan lists and N = 800.
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// Particle mass in units of `mass_unit`.
    pub mass: f64,
    /// a.u. per mass unit.
    pub mass_unit: f64,
    pub barrier_height: f64,
    pub barrier_distance: f64,
    pub charge: f64,
    pub t0: f64,
    pub tf: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub field_bounds: (f64, f64),
    /// Replaces the default state boxes when given.
    pub state_bounds: Option<StateBounds>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        let w = QuarticDoubleWell::default();
        Self {
            mass: 1.0,
            mass_unit: HYDROGEN_MASS,
            barrier_height: w.barrier_height,
            barrier_distance: w.barrier_distance,
            charge: w.charge,
            t0: 0.0,
            tf: 20000.0,
            kappa: 0.3,
            epsilon: 0.005,
            eta: 0.0,
            field_bounds: (-0.05, 0.05),
            state_bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub scheme: Scheme,
    pub nodes: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { scheme: Scheme::HermiteSimpson, nodes: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuessConfig {
    /// Noise amplitude relative to each variable's scale.
    pub amplitude: f64,
    /// Seeded starts per scan cell; the best converged objective is kept.
    pub restarts: usize,
}

impl Default for GuessConfig {
    fn default() -> Self {
        Self { amplitude: 0.05, restarts: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Half-width of the grid in barrier distances.
    pub half_width: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { half_width: 6.0, points: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    pub grid: GridConfig,
    /// Split-operator step (a.u.).
    pub dt: f64,
    /// Store every `stride`-th step.
    pub stride: usize,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self { grid: GridConfig::default(), dt: gaussctl::qprop::DEFAULT_DT, stride: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// Masses in `mass_unit`.
    pub masses: Vec<f64>,
    pub final_times: Vec<f64>,
    /// Per-cell kinetic-energy reward keyed `"mass,tf"`, e.g. `"7,14000"`.
    pub eta_overrides: BTreeMap<String, f64>,
    /// Draw the `(2n+1)T/2` and `nT` curves on the heatmap.
    pub reference_curves: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            masses: (1..=10).map(f64::from).collect(),
            final_times: (5..=20).map(|k| 1000.0 * k as f64).collect(),
            eta_overrides: BTreeMap::new(),
            reference_curves: true,
        }
    }
}

impl ScanConfig {
    pub fn eta_for(&self, mass: f64, tf: f64, default: f64) -> f64 {
        self.eta_overrides.get(&cell_key(mass, tf)).copied().unwrap_or(default)
    }
}

pub fn cell_key(mass: f64, tf: f64) -> String {
    format!("{mass},{tf}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub nodes: Vec<usize>,
    pub schemes: Vec<Scheme>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            nodes: vec![200, 500, 1000, 1500, 2000, 3000, 4000, 6000],
            schemes: vec![Scheme::Trapezoidal, Scheme::HermiteSimpson],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenConfig {
    pub masses: Vec<f64>,
    pub grid: GridConfig,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self { masses: vec![1.0, 5.0], grid: GridConfig { half_width: 3.0, points: 256 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub problem: ProblemConfig,
    pub mesh: MeshConfig,
    pub solver: SolverOptions,
    pub guess: GuessConfig,
    pub replay: ReplayConfig,
    pub scan: Option<ScanConfig>,
    pub study: StudyConfig,
    pub eigen: EigenConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self {
            seed: 0,
            output_dir: PathBuf::from("runs"),
            problem: ProblemConfig::default(),
            mesh: MeshConfig::default(),
            // bounds the cost of cells that never converge
            solver: SolverOptions { inner_budget: Some(3000), ..SolverOptions::default() },
            guess: GuessConfig::default(),
            replay: ReplayConfig::default(),
            scan: Some(ScanConfig::default()),
            study: StudyConfig::default(),
            eigen: EigenConfig::default(),
        };
        match preset {
            Preset::Paper => base,
            Preset::Desk => Self {
                mesh: MeshConfig { nodes: 800, ..base.mesh },
                scan: Some(ScanConfig {
                    masses: vec![6.0, 7.0, 8.0, 9.0, 10.0],
                    final_times: (3..=10).map(|k| 2000.0 * k as f64).collect(),
                    ..ScanConfig::default()
                }),
                study: StudyConfig { nodes: vec![200, 400, 800, 1200, 1600], ..base.study },
                ..base
            },
        }
    }

    /// Preset values overlaid with the tables of a TOML document.
    pub fn from_toml(preset: Preset, text: &str) -> Result<Self> {
        let mut merged = toml::Table::try_from(Self::preset(preset))?;
        let file: toml::Table = text.parse().context("config is not valid TOML")?;
        overlay(&mut merged, file);
        let cfg: Self = merged.try_into().context("config does not match the schema")?;
        Ok(cfg)
    }

    pub fn load(preset: Preset, path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::preset(preset)),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(preset, &text).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serialisable")
    }

    pub fn well(&self) -> Result<QuarticDoubleWell> {
        self.well_for(self.problem.mass)
    }

    pub fn well_for(&self, mass: f64) -> Result<QuarticDoubleWell> {
        let p = &self.problem;
        Ok(QuarticDoubleWell::new(p.barrier_height, p.barrier_distance, p.charge, mass * p.mass_unit)?)
    }

    pub fn control_problem(&self) -> Result<ControlProblem> {
        self.control_problem_for(self.problem.mass, self.problem.tf, self.problem.eta)
    }

    /// The configured problem with mass, final time and reward replaced.
    pub fn control_problem_for(&self, mass: f64, tf: f64, eta: f64) -> Result<ControlProblem> {
        let p = &self.problem;
        let mut prob = ControlProblem::well_transfer(&self.well_for(mass)?, tf);
        prob.t0 = p.t0;
        prob.kappa = p.kappa;
        prob.epsilon = p.epsilon;
        prob.eta = eta;
        prob.field_bounds = p.field_bounds;
        if let Some(b) = p.state_bounds {
            prob.state_bounds = b;
        }
        prob.validate()?;
        Ok(prob)
    }

    pub fn mesh_for(&self, tf: f64) -> Result<Mesh> {
        Ok(Mesh::new(self.mesh.scheme, self.mesh.nodes, self.problem.t0, tf)?)
    }

    pub fn replay_grid(&self) -> Result<SpatialGrid> {
        let g = &self.replay.grid;
        let xb = self.problem.barrier_distance;
        Ok(SpatialGrid::new(-g.half_width * xb, g.half_width * xb, g.points)?)
    }

    pub fn eigen_grid(&self) -> Result<SpatialGrid> {
        let g = &self.eigen.grid;
        let xb = self.problem.barrier_distance;
        Ok(SpatialGrid::new(-g.half_width * xb, g.half_width * xb, g.points)?)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        check_horizon(p.t0, p.tf)?;
        if self.mesh.nodes < 10 {
            bail!("mesh needs at least 10 nodes, got {}", self.mesh.nodes);
        }
        if !(p.mass > 0.0 && p.mass_unit > 0.0) {
            bail!("mass and mass_unit must be positive");
        }
        if self.guess.restarts == 0 {
            bail!("guess.restarts must be at least 1");
        }
        if !(self.guess.amplitude >= 0.0) {
            bail!("guess.amplitude must be non-negative");
        }
        if !(self.replay.dt > 0.0) || self.replay.stride == 0 {
            bail!("replay needs dt > 0 and stride >= 1");
        }
        self.solver.validate()?;
        self.control_problem()?;
        self.replay_grid()?;
        self.eigen_grid()?;
        Ok(())
    }

    /// Validation for scan mode: lists present and non-empty, every cell
    /// horizon long enough.
    pub fn validate_scan(&self) -> Result<&ScanConfig> {
        self.validate()?;
        let Some(scan) = &self.scan else { bail!("scan mode needs a [scan] table") };
        if scan.masses.is_empty() || scan.final_times.is_empty() {
            bail!("scan.masses and scan.final_times must be non-empty");
        }
        if let Some(m) = scan.masses.iter().find(|m| !(**m > 0.0)) {
            bail!("scan mass {m} must be positive");
        }
        for &tf in &scan.final_times {
            check_horizon(self.problem.t0, tf)?;
        }
        for key in scan.eta_overrides.keys() {
            let ok = key.split_once(',').is_some_and(|(m, t)| m.trim().parse::<f64>().is_ok() && t.trim().parse::<f64>().is_ok());
            if !ok {
                bail!("eta override key {key:?} is not \"mass,tf\"");
            }
        }
        Ok(scan)
    }
}

/// A horizon must hold at least 10 nodes at the minimum spacing.
pub fn check_horizon(t0: f64, tf: f64) -> Result<()> {
    if !(tf - t0 >= 10.0 * MIN_NODE_SPACING) {
        bail!("horizon tf - t0 = {} is shorter than 10 nodes' worth of time ({} a.u.)", tf - t0, 10.0 * MIN_NODE_SPACING);
    }
    Ok(())
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
