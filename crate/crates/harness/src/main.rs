use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use gaussctl_harness::config::{ExperimentConfig, Preset};
use gaussctl_harness::experiments::{self, status_name};
use gaussctl_harness::figures::{emit_figure_data, Figure};
use gaussctl_harness::output::atomic_write;

#[derive(Parser)]
#[command(name = "gaussctl", version, about = "Optimal control of Gaussian wavepackets in a double well")]
struct Cli {
    /// TOML config layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for scans.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Results directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Paper)]
    preset: Preset,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured control problem.
    Optimize,
    /// Replay a stored solution through the Gaussian and grid propagators.
    Replay,
    /// Optimize and replay every (mass, tf) cell.
    Scan,
    /// Tabulate the discretization error against the node count.
    DiscretizationStudy {
        /// Node counts, comma separated; defaults to `study.nodes`.
        #[arg(long, value_delimiter = ',')]
        nodes: Vec<usize>,
    },
    /// Sub-barrier eigenstates for the configured masses.
    Eigenstates,
    /// Figure CSV and SVG from earlier runs.
    Plot {
        #[arg(value_enum)]
        figure: Figure,
    },
    /// Print the effective config.
    Config,
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(cli.preset, cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.output_dir = o;
    }
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Optimize => {
            let o = experiments::run_optimize(&cfg, &out)?;
            println!("{}: {} (objective {:e}, x0(tf) = {:.6})", o.dir.display(), status_name(o.solve.report.status), o.solve.report.final_objective, o.final_state.x0);
            if !o.converged() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Replay => {
            let (dir, s) = experiments::run_replay(&cfg, &out)?;
            println!("{}: Err = {:.4}, overlap = {:.4}", dir.display(), s.err, s.overlap);
        }
        Command::Scan => {
            let cells = experiments::run_scan_with(&cfg, cli.workers, |c, dt| {
                let err = c.err.map_or("-".into(), |e| format!("{e:.3}"));
                eprintln!("m = {}, tf = {}: {}, Err {err} ({:.1} s)", c.mass, c.tf, c.solver_status, dt.as_secs_f64());
            })?;
            let path = experiments::scan_csv_path(&out, cfg.problem.eta);
            std::fs::create_dir_all(path.parent().unwrap())?;
            atomic_write(&path, |w| experiments::write_scan_csv(&cells, w))?;
            let (svg_csv, svg) = emit_figure_data(&cfg, &out, if cfg.problem.eta > 0.0 { Figure::Fig6 } else { Figure::Fig5 })?;
            println!("{} ({} cells), {}, {}", path.display(), cells.len(), svg_csv.display(), svg.display());
        }
        Command::DiscretizationStudy { nodes } => {
            let nodes = if nodes.is_empty() { cfg.study.nodes.clone() } else { nodes };
            let rows = experiments::run_discretization_study(&cfg, &nodes)?;
            let path = experiments::study_csv_path(&out);
            std::fs::create_dir_all(path.parent().unwrap())?;
            atomic_write(&path, |w| experiments::write_study_csv(&rows, w))?;
            println!("{} ({} rows)", path.display(), rows.len());
        }
        Command::Eigenstates => {
            for (m, states) in experiments::run_eigenstates(&cfg, &out)? {
                println!("m = {m}: {} sub-barrier states", states.len());
            }
        }
        Command::Plot { figure } => {
            let (c, s) = emit_figure_data(&cfg, &out, figure)?;
            println!("{}, {}", c.display(), s.display());
        }
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
