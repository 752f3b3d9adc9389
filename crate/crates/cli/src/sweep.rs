//! Parameter sweeps over gain, regularization and mesh resolution.
//!
//! `summary.csv` columns: `cell,rho_spec,eps,nodes,rho,rho_star,t_star_pred,
//! t_star_emp,status,run_id,error`. Missing values are empty; `nodes` joins
//! the per-axis counts with `x`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{LoadedConfig, SweepConfig};
use crate::run::{execute, prepare};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Gain {
    Rho(f64),
    Factor(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub gain: Option<Gain>,
    pub eps: Option<f64>,
    pub nodes: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub cell: usize,
    pub rho_spec: String,
    pub eps: f64,
    pub nodes: Vec<usize>,
    pub rho: Option<f64>,
    pub rho_star: Option<f64>,
    pub t_star_pred: Option<f64>,
    pub t_star_emp: Option<f64>,
    pub status: Option<&'static str>,
    pub run_id: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub name: String,
    pub cells: Vec<Row>,
    /// Least-squares slope of `ln T*_emp` against `ln ρ` over cells with a
    /// positive extinction time.
    pub fitted_exponent: Option<f64>,
}

fn or_keep<T>(v: Vec<Option<T>>) -> Vec<Option<T>> {
    if v.is_empty() {
        vec![None]
    } else {
        v
    }
}

/// Cartesian product of the non-empty axes; empty when every axis is empty.
pub fn cells(grid: &SweepConfig) -> Vec<Cell> {
    let gains: Vec<Option<Gain>> = grid
        .rho
        .iter()
        .map(|&r| Some(Gain::Rho(r)))
        .chain(grid.rho_factor.iter().map(|&f| Some(Gain::Factor(f))))
        .collect();
    if gains.is_empty() && grid.eps.is_empty() && grid.nodes.is_empty() {
        return Vec::new();
    }
    let gains = or_keep(gains);
    let eps = or_keep(grid.eps.iter().map(|&e| Some(e)).collect());
    let nodes = or_keep(grid.nodes.iter().map(|n| Some(n.clone())).collect());
    let mut out = Vec::new();
    for g in &gains {
        for e in &eps {
            for n in &nodes {
                out.push(Cell {
                    gain: g.clone(),
                    eps: *e,
                    nodes: n.clone(),
                });
            }
        }
    }
    out
}

/// The single-run config of a cell.
pub fn cell_config(base: &LoadedConfig, cell: &Cell) -> LoadedConfig {
    let mut c = base.clone();
    let p = &mut c.config.problem;
    match cell.gain {
        Some(Gain::Rho(r)) => {
            p.rho = Some(r);
            p.rho_factor = None;
        }
        Some(Gain::Factor(f)) => {
            p.rho = None;
            p.rho_factor = Some(f);
        }
        None => {}
    }
    if let Some(e) = cell.eps {
        p.eps = e;
    }
    if let Some(n) = &cell.nodes {
        c.config.mesh.nodes = n.clone();
    }
    c.config.sweep = None;
    c
}

/// Slope of the least-squares line through `(ln ρ, ln T)`.
pub fn fitted_exponent(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(r, t)| *r > 0.0 && *t > 0.0 && r.is_finite() && t.is_finite())
        .map(|(r, t)| (r.ln(), t.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn run_cell(base: &LoadedConfig, index: usize, cell: &Cell, out_root: &Path) -> Row {
    let cfg = cell_config(base, cell);
    let c = &cfg.config;
    let mut row = Row {
        cell: index,
        rho_spec: match (c.problem.rho, c.problem.rho_factor) {
            (Some(r), _) => format!("rho={r}"),
            (None, Some(f)) => format!("rho_factor={f}"),
            (None, None) => String::new(),
        },
        eps: c.problem.eps,
        nodes: c.mesh.nodes.clone(),
        rho: None,
        rho_star: None,
        t_star_pred: None,
        t_star_emp: None,
        status: None,
        run_id: None,
        error: None,
    };
    let result = cfg
        .config
        .validate()
        .and_then(|_| prepare(cfg.clone()))
        .and_then(|p| execute(&p, out_root));
    match result {
        Ok(o) => {
            row.rho = Some(o.rho);
            row.rho_star = o.bounds.rho_star;
            row.t_star_pred = o.bounds.t_star_pred;
            row.t_star_emp = o.verdict.t_star_emp;
            row.status = Some(o.verdict.status.name());
            row.run_id = Some(o.run_id);
        }
        Err(e) => row.error = Some(format!("{e:#}")),
    }
    row
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(s: &Summary) -> String {
    let mut out = String::from(
        "cell,rho_spec,eps,nodes,rho,rho_star,t_star_pred,t_star_emp,status,run_id,error\n",
    );
    for r in &s.cells {
        let nodes: Vec<String> = r.nodes.iter().map(|n| n.to_string()).collect();
        let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.cell,
            r.rho_spec,
            r.eps,
            nodes.join("x"),
            opt(r.rho),
            opt(r.rho_star),
            opt(r.t_star_pred),
            opt(r.t_star_emp),
            r.status.unwrap_or(""),
            r.run_id.as_deref().unwrap_or(""),
            error,
        ));
    }
    out
}

pub struct SweepOutcome {
    pub dir: PathBuf,
    pub summary: Summary,
}

/// Runs every cell on a pool of `jobs` workers; each cell writes its own
/// run directory and failures are recorded in the cell's row.
pub fn sweep(base: &LoadedConfig, jobs: usize, out_root: &Path) -> Result<SweepOutcome> {
    let grid = base.config.sweep.clone().unwrap_or_default();
    let cells = cells(&grid);
    if cells.is_empty() {
        bail!("empty sweep grid: give at least one of `sweep.rho`, `sweep.rho_factor`, `sweep.eps`, `sweep.nodes`");
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let cells_out: Vec<Row> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, c)| run_cell(base, i, c, out_root))
            .collect()
    });
    let points: Vec<(f64, f64)> = cells_out
        .iter()
        .filter_map(|r| Some((r.rho?, r.t_star_emp?)))
        .collect();
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        name: base.config.name.clone(),
        fitted_exponent: fitted_exponent(&points),
        cells: cells_out,
    };
    let dir = out_root.join(format!("{}-sweep-{}", base.config.name, base.sweep_hash()?));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.resolved.toml"), base.config.to_toml())?;
    fs::write(dir.join("summary.csv"), summary_csv(&summary))?;
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(SweepOutcome { dir, summary })
}
