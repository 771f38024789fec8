//! Plottable CSV and SVG for each figure, built from earlier runs' outputs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gaussctl::potential::Potential;

use crate::config::ExperimentConfig;
use crate::experiments::{eigen_csv_path, harmonic_period, read_scan_csv, reference_curves, study_csv_path, ScanCell};
use crate::output::atomic_write;
use crate::svg::{self, Heatmap, Panel, Series, BLUE, GREEN, GREY, ORANGE, RED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Figure {
    /// Eigenstate ladders.
    Fig1,
    /// Discretization error and timing.
    Fig2,
    /// Initial guesses and optimal solutions.
    Fig3,
    /// Quantum against Gaussian position mean and variance.
    Fig4,
    /// Err heatmap without the kinetic-energy reward.
    Fig5,
    /// Err heatmap with the kinetic-energy reward.
    Fig6,
    /// Position, momentum, field and energies at tf = 14000.
    Fig7,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
        }
    }
}

/// Columns of a CSV file; empty or non-numeric cells read as NaN.
struct Table {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
    text: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let headers: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let mut columns = vec![Vec::new(); headers.len()];
        let mut text = vec![Vec::new(); headers.len()];
        for rec in r.records() {
            let rec = rec?;
            for (j, v) in rec.iter().enumerate().take(headers.len()) {
                columns[j].push(v.parse().unwrap_or(f64::NAN));
                text[j].push(v.to_string());
            }
        }
        Ok(Self { headers, columns, text })
    }

    fn col(&self, name: &str) -> Result<&[f64]> {
        let j = self.headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("missing column {name}"))?;
        Ok(&self.columns[j])
    }

    fn text(&self, name: &str) -> Result<&[String]> {
        let j = self.headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("missing column {name}"))?;
        Ok(&self.text[j])
    }
}

fn subdirs_with(dir: &Path, file: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|it| it.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join(file).is_file()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn label(dir: &Path) -> String {
    dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn csv_string(headers: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Write `figures/<name>.csv` and `figures/<name>.svg` under `out`. Every
/// input is read before anything is written; a missing prerequisite is an
/// error naming the run that produces it.
pub fn emit_figure_data(cfg: &ExperimentConfig, out: &Path, which: Figure) -> Result<(PathBuf, PathBuf)> {
    let (csv, svg) = match which {
        Figure::Fig1 => fig1(cfg, out)?,
        Figure::Fig2 => fig2(out)?,
        Figure::Fig3 => fig3(out)?,
        Figure::Fig4 => fig4(out)?,
        Figure::Fig5 => heatmap_figure(cfg, out, false)?,
        Figure::Fig6 => heatmap_figure(cfg, out, true)?,
        Figure::Fig7 => fig7(out)?,
    };
    let dir = out.join("figures");
    std::fs::create_dir_all(&dir)?;
    let (cp, sp) = (dir.join(format!("{}.csv", which.name())), dir.join(format!("{}.svg", which.name())));
    atomic_write(&cp, |w| Ok(w.write_all(csv.as_bytes())?))?;
    atomic_write(&sp, |w| Ok(w.write_all(svg.as_bytes())?))?;
    Ok((cp, sp))
}

fn fig1(cfg: &ExperimentConfig, out: &Path) -> Result<(String, String)> {
    let mut rows = Vec::new();
    let mut panels = Vec::new();
    for &m in &cfg.eigen.masses {
        let path = eigen_csv_path(out, m);
        if !path.is_file() {
            bail!("fig1 needs {}; run `gaussctl eigenstates` first", path.display());
        }
        let t = Table::read(&path)?;
        let well = cfg.well_for(m)?;
        let xb = well.barrier_distance;
        let xs: Vec<f64> = (0..=400).map(|k| -1.8 * xb + 3.6 * xb * k as f64 / 400.0).collect();
        let mut panel = Panel::new(format!("m = {m} m_H"), "x (a0)", "energy (Eh)").with(Series::new(
            "",
            xs.clone(),
            xs.iter().map(|&x| well.value(x)).collect(),
            "black",
        ));
        for ((i, e), p) in t.col("index")?.iter().zip(t.col("energy")?).zip(t.text("parity")?) {
            // classical turning points of the outer walls
            let outer = xb * (1.0 + (e / well.barrier_height).sqrt()).sqrt();
            rows.push(vec![format!("{m}"), format!("{i}"), num(*e), p.clone(), num(-outer), num(outer)]);
            let s = Series::new(if p == "even" { "even" } else { "odd" }, vec![-outer, outer], vec![*e, *e], if p == "even" { BLUE } else { ORANGE });
            panel.series.push(if p == "even" { s } else { s.dashed() });
        }
        panels.push(panel);
    }
    Ok((csv_string(&["mass", "index", "energy", "parity", "x_left", "x_right"], rows)?, svg::line_panels(&panels, 2)))
}

fn fig2(out: &Path) -> Result<(String, String)> {
    let path = study_csv_path(out);
    if !path.is_file() {
        bail!("fig2 needs {}; run `gaussctl discretization-study` first", path.display());
    }
    let t = Table::read(&path)?;
    let (schemes, nodes, eps, wall) = (t.text("scheme")?, t.col("nodes")?, t.col("epsilon_disc")?, t.col("wall_time")?);
    let mut err_panel = Panel::new("maximum relative local error", "nodes", "epsilon_disc");
    err_panel.log_y = true;
    let mut time_panel = Panel::new("timing", "nodes", "wall time (s)");
    for (name, colour) in [("trapezoidal", BLUE), ("hermite-simpson", ORANGE)] {
        let idx: Vec<usize> = (0..schemes.len()).filter(|&i| schemes[i] == name).collect();
        let x: Vec<f64> = idx.iter().map(|&i| nodes[i]).collect();
        err_panel.series.push(Series::new(name, x.clone(), idx.iter().map(|&i| eps[i]).collect(), colour));
        time_panel.series.push(Series::new(name, x, idx.iter().map(|&i| wall[i]).collect(), colour));
    }
    let rows = (0..schemes.len()).map(|i| vec![schemes[i].clone(), format!("{}", nodes[i]), num(eps[i]), num(wall[i])]);
    Ok((csv_string(&["scheme", "nodes", "epsilon_disc", "wall_time"], rows)?, svg::line_panels(&[err_panel, time_panel], 1)))
}

const STATE_COLUMNS: [&str; 5] = ["alpha", "beta", "x0", "p0", "E"];

fn fig3(out: &Path) -> Result<(String, String)> {
    let dirs = subdirs_with(&out.join("optimize"), "solution.csv");
    if dirs.is_empty() {
        bail!("fig3 needs {}/<run>/solution.csv; run `gaussctl optimize` first", out.join("optimize").display());
    }
    let mut rows = Vec::new();
    let mut panels = Vec::new();
    for dir in &dirs {
        let run = label(dir);
        let sol = Table::read(&dir.join("solution.csv"))?;
        let guess = if dir.join("guess.csv").is_file() { Some(Table::read(&dir.join("guess.csv"))?) } else { None };
        for (kind, t) in std::iter::once(("solution", &sol)).chain(guess.as_ref().map(|g| ("guess", g))) {
            let tt = t.col("t")?;
            for i in 0..tt.len() {
                let mut r = vec![run.clone(), kind.to_string(), num(tt[i])];
                for c in STATE_COLUMNS {
                    r.push(num(t.col(c)?[i]));
                }
                rows.push(r);
            }
        }
        for c in STATE_COLUMNS {
            let mut p = Panel::new(format!("{run}: {c}"), "t (au)", c);
            if let Some(g) = &guess {
                p.series.push(Series::new("guess", g.col("t")?.to_vec(), g.col(c)?.to_vec(), GREY).dashed());
            }
            p.series.push(Series::new("optimal", sol.col("t")?.to_vec(), sol.col(c)?.to_vec(), BLUE));
            panels.push(p);
        }
    }
    let mut headers = vec!["run", "kind", "t"];
    headers.extend(STATE_COLUMNS);
    Ok((csv_string(&headers, rows)?, svg::line_panels(&panels, STATE_COLUMNS.len())))
}

fn fig4(out: &Path) -> Result<(String, String)> {
    let dirs = subdirs_with(&out.join("replay"), "comparison.csv");
    if dirs.is_empty() {
        bail!("fig4 needs {}/<run>/comparison.csv; run `gaussctl replay` first", out.join("replay").display());
    }
    let mut rows = Vec::new();
    let mut panels = Vec::new();
    let cols = ["t", "x_quantum", "x_gaussian", "var_quantum", "var_gaussian"];
    for dir in &dirs {
        let run = label(dir);
        let t = Table::read(&dir.join("comparison.csv"))?;
        let tt = t.col("t")?;
        for i in 0..tt.len() {
            let mut r = vec![run.clone()];
            for c in cols {
                r.push(num(t.col(c)?[i]));
            }
            rows.push(r);
        }
        panels.push(
            Panel::new(format!("{run}: <x>"), "t (au)", "<x> (a0)")
                .with(Series::new("Gaussian", tt.to_vec(), t.col("x_gaussian")?.to_vec(), BLUE))
                .with(Series::new("quantum", tt.to_vec(), t.col("x_quantum")?.to_vec(), ORANGE)),
        );
        panels.push(
            Panel::new(format!("{run}: variance"), "t (au)", "var x (a0^2)")
                .with(Series::new("Gaussian", tt.to_vec(), t.col("var_gaussian")?.to_vec(), BLUE))
                .with(Series::new("quantum", tt.to_vec(), t.col("var_quantum")?.to_vec(), ORANGE)),
        );
    }
    let mut headers = vec!["run"];
    headers.extend(cols);
    Ok((csv_string(&headers, rows)?, svg::line_panels(&panels, 2)))
}

fn scan_files(out: &Path) -> Vec<(f64, PathBuf)> {
    let mut v: Vec<(f64, PathBuf)> = std::fs::read_dir(out.join("scan"))
        .map(|it| {
            it.filter_map(|e| e.ok().map(|e| e.path()))
                .filter_map(|p| {
                    let name = p.file_name()?.to_str()?.to_string();
                    let eta: f64 = name.strip_prefix("scan_eta")?.strip_suffix(".csv")?.parse().ok()?;
                    Some((eta, p))
                })
                .collect()
        })
        .unwrap_or_default();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn heatmap_figure(cfg: &ExperimentConfig, out: &Path, with_reward: bool) -> Result<(String, String)> {
    let name = if with_reward { "fig6" } else { "fig5" };
    let Some((eta, path)) = scan_files(out).into_iter().find(|(eta, _)| (*eta > 0.0) == with_reward) else {
        bail!(
            "{name} needs {}/scan_eta{}.csv; run `gaussctl scan` with {} first",
            out.join("scan").display(),
            if with_reward { "<eta>" } else { "0" },
            if with_reward { "problem.eta > 0" } else { "problem.eta = 0" }
        );
    };
    let cells = read_scan_csv(&path)?;
    let mut masses: Vec<f64> = cells.iter().map(|c| c.mass).collect();
    let mut tfs: Vec<f64> = cells.iter().map(|c| c.tf).collect();
    for v in [&mut masses, &mut tfs] {
        v.sort_by(f64::total_cmp);
        v.dedup();
    }
    let find = |m: f64, tf: f64| -> Option<&ScanCell> { cells.iter().find(|c| c.mass == m && c.tf == tf) };
    let values = masses.iter().flat_map(|&m| tfs.iter().map(move |&tf| (m, tf))).map(|(m, tf)| find(m, tf).and_then(|c| c.err)).collect();
    let mut overlays = Vec::new();
    let mut rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| vec!["cell".into(), format!("{}", c.mass), format!("{}", c.tf), c.err.map_or(String::new(), num), String::new()])
        .collect();
    let show_curves = cfg.scan.as_ref().is_none_or(|s| s.reference_curves);
    if show_curves && masses.len() > 1 {
        let fine: Vec<f64> = (0..=100).map(|k| masses[0] + (masses[masses.len() - 1] - masses[0]) * k as f64 / 100.0).collect();
        for c in reference_curves() {
            let y: Vec<f64> = fine.iter().map(|&m| harmonic_period(cfg, m).map(|t| c.factor * t)).collect::<Result<_>>()?;
            let kind = if c.odd_half { format!("{}T/2", 2.0 * c.factor) } else { format!("{}T", c.factor) };
            for (&m, &tf) in fine.iter().zip(&y) {
                rows.push(vec![format!("curve {kind}"), format!("{m}"), num(tf), String::new(), kind.clone()]);
            }
            overlays.push(Series::new(kind, fine.clone(), y, if c.odd_half { GREEN } else { RED }));
        }
    }
    let h = Heatmap {
        title: format!("Err, eta = {eta}"),
        x_label: "mass (m_H)".into(),
        y_label: "tf (au)".into(),
        xs: masses,
        ys: tfs,
        values,
        mid: 1.0,
        overlays,
    };
    Ok((csv_string(&["kind", "mass", "tf", "err", "curve"], rows)?, svg::heatmap(&h)))
}

fn fig7(out: &Path) -> Result<(String, String)> {
    let dirs: Vec<PathBuf> =
        subdirs_with(&out.join("replay"), "quantum.csv").into_iter().filter(|d| label(d).contains("_tf14000")).collect();
    if dirs.is_empty() {
        bail!("fig7 needs replays at tf = 14000 under {}; run `gaussctl optimize` and `gaussctl replay` for them first", out.join("replay").display());
    }
    let mut rows = Vec::new();
    let mut panels = Vec::new();
    for dir in &dirs {
        let run = label(dir);
        let sol_path = out.join("optimize").join(&run).join("solution.csv");
        if !sol_path.is_file() {
            bail!("fig7 needs {}; run `gaussctl optimize` first", sol_path.display());
        }
        let q = Table::read(&dir.join("quantum.csv"))?;
        let sol = Table::read(&sol_path)?;
        let t = q.col("t")?;
        for i in 0..t.len() {
            let mut r = vec![run.clone(), num(t[i])];
            for c in ["x_mean", "p_mean", "E", "V", "K"] {
                r.push(num(q.col(c)?[i]));
            }
            rows.push(r);
        }
        panels.push(Panel::new(format!("{run}: <x>"), "t (au)", "<x> (a0)").with(Series::new("", t.to_vec(), q.col("x_mean")?.to_vec(), BLUE)));
        panels.push(Panel::new(format!("{run}: <p>"), "t (au)", "<p> (au)").with(Series::new("", t.to_vec(), q.col("p_mean")?.to_vec(), BLUE)));
        panels.push(
            Panel::new(format!("{run}: field"), "t (au)", "E (au)").with(Series::new("", sol.col("t")?.to_vec(), sol.col("E")?.to_vec(), BLUE)),
        );
        panels.push(
            Panel::new(format!("{run}: energies"), "t (au)", "energy (Eh)")
                .with(Series::new("total", t.to_vec(), q.col("E")?.to_vec(), "black"))
                .with(Series::new("V", t.to_vec(), q.col("V")?.to_vec(), GREEN))
                .with(Series::new("K", t.to_vec(), q.col("K")?.to_vec(), RED)),
        );
    }
    Ok((csv_string(&["run", "t", "x_mean", "p_mean", "energy", "potential", "kinetic"], rows)?, svg::line_panels(&panels, 4)))
}
