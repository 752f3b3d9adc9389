//! Single-run orchestration and persistence.
//!
//! Run directory layout:
//!
//! * `config.resolved.toml`: the config with every default filled in and
//!   any sweep grid dropped;
//! * `trajectory.csv`: `t,psi,mass,energy,balance_residual,theta_linf,phi_linf`,
//!   one row per sample;
//! * `bounds.json`, `verdict.json`;
//! * `snapshots/`: `index.csv` (`index,t`) and little-endian binary fields
//!   `theta_NNNNN.bin`, `phi_NNNNN.bin` when snapshots are kept.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use pfsmc_core::bounds::{bounds_report, BoundsInputs, BoundsReport};
use pfsmc_core::dynamics::{
    read_trajectory_csv, simulate, write_trajectory_csv, PhysParams, ProblemSpec, RunSettings,
    Snapshot, Trajectory, Variant,
};
use pfsmc_core::extinction::{verify_sliding, ExtinctionVerdict, VerdictStatus};
use pfsmc_core::grid::{estimate_embedding_constant, io, EmbeddingEstimate, Field, Mesh};
use pfsmc_core::operators::Potential;

use crate::config::{LoadedConfig, VariantName};
use crate::fields;

/// Everything a run needs that does not depend on the gain.
pub struct Prepared {
    pub cfg: LoadedConfig,
    pub spec: ProblemSpec,
    pub embedding: EmbeddingEstimate,
}

pub fn prepare(cfg: LoadedConfig) -> Result<Prepared> {
    let c = &cfg.config;
    let mesh = Arc::new(Mesh::new(&c.mesh.lengths, &c.mesh.nodes)?);
    let p = &c.physics;
    let params = PhysParams::new(p.ell, p.kappa, p.nu, p.gamma)?;
    let target = fields::static_field(&cfg, "target", &c.problem.target, &mesh)?;
    let variant = match c.variant_name() {
        VariantName::A => Variant::A {
            alpha: c.problem.alpha.expect("resolved config has alpha for A"),
            eta_star: target,
        },
        VariantName::B => Variant::B { phi_star: target },
        VariantName::C => Variant::C { phi_star: target },
    };
    let spec = ProblemSpec {
        params,
        variant,
        rho: c.problem.pilot_rho,
        eps: c.problem.eps,
        potential: Potential::new(c.kind(), c.potential.c0)?,
        source: fields::source(&cfg, &c.data.f, &mesh)?,
        theta0: fields::static_field(&cfg, "theta0", &c.data.theta0, &mesh)?,
        phi0: fields::static_field(&cfg, "phi0", &c.data.phi0, &mesh)?,
        c0_heat: p.c0_heat,
    };
    spec.validate()?;
    let embedding = estimate_embedding_constant(&mesh, c.verify.embedding_samples, c.seed);
    Ok(Prepared {
        cfg,
        spec,
        embedding,
    })
}

impl Prepared {
    pub fn settings(&self, snapshots: bool) -> RunSettings {
        let c = &self.cfg.config;
        RunSettings {
            t_final: c.time.t_final,
            dt: c.dt(),
            mode: c.problem.mode,
            sample_every: c.time.sample_every,
            snapshots,
        }
    }

    fn main_snapshots(&self) -> bool {
        self.cfg.config.verify.snapshots || self.cfg.config.variant_name() == VariantName::C
    }

    /// Pilot run at `pilot_rho`, then the report at the configured gain.
    pub fn bounds(&self) -> Result<(BoundsReport, f64)> {
        let c = &self.cfg.config;
        let pilot_rho = c.problem.pilot_rho;
        let mut spec = self.spec.clone();
        spec.rho = pilot_rho;
        let pilot = simulate(&spec, &self.settings(true)).context("pilot run failed")?;
        let report_at = |spec: &ProblemSpec| {
            bounds_report(&BoundsInputs {
                spec,
                pilot: &pilot,
                pilot_rho,
                embedding: self.embedding,
                t_final: c.time.t_final,
            })
        };
        let rho = match (c.problem.rho, c.problem.rho_factor) {
            (Some(r), _) => r,
            (None, Some(f)) => {
                let probe = report_at(&spec)?;
                match probe.rho_star {
                    Some(rs) if rs.is_finite() => f * rs,
                    _ => bail!(
                        "`rho_factor` needs a finite threshold, but none is available ({})",
                        probe
                            .inapplicable_reason
                            .as_deref()
                            .unwrap_or("threshold is infinite")
                    ),
                }
            }
            (None, None) => unreachable!("validated config has a gain"),
        };
        spec.rho = rho;
        Ok((report_at(&spec)?, rho))
    }
}

pub struct Outcome {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub rho: f64,
    pub bounds: BoundsReport,
    pub verdict: ExtinctionVerdict,
}

/// Pilot, main run, verdict, and everything written under `out_root`.
pub fn execute(prep: &Prepared, out_root: &Path) -> Result<Outcome> {
    let run_id = prep.cfg.run_id()?;
    let (bounds, rho) = prep.bounds()?;
    let mut spec = prep.spec.clone();
    spec.rho = rho;
    let traj = simulate(&spec, &prep.settings(prep.main_snapshots()))
        .with_context(|| format!("run at rho = {rho} failed"))?;
    let mut verdict = verify_sliding(&traj, &spec, &bounds, &prep.cfg.config.verify.options())?;
    verdict.run_id = Some(run_id.clone());

    let run_dir = out_root.join(&run_id);
    fs::create_dir_all(&run_dir)
        .with_context(|| format!("cannot create run directory {}", run_dir.display()))?;
    fs::write(
        run_dir.join("config.resolved.toml"),
        prep.cfg.config.run_toml(),
    )?;
    let mut w = BufWriter::new(fs::File::create(run_dir.join("trajectory.csv"))?);
    write_trajectory_csv(&traj, &mut w)?;
    w.flush()?;
    fs::write(run_dir.join("bounds.json"), bounds.to_json() + "\n")?;
    fs::write(run_dir.join("verdict.json"), verdict.to_json() + "\n")?;
    let snap_dir = run_dir.join("snapshots");
    if snap_dir.exists() {
        fs::remove_dir_all(&snap_dir)?;
    }
    if !traj.snapshots.is_empty() {
        write_snapshots(&snap_dir, &traj.snapshots)?;
    }
    Ok(Outcome {
        run_id,
        run_dir,
        rho,
        bounds,
        verdict,
    })
}

fn write_snapshots(dir: &Path, snaps: &[Snapshot]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = String::from("index,t\n");
    for (i, s) in snaps.iter().enumerate() {
        index.push_str(&format!("{i},{}\n", s.t));
        for (name, f) in [("theta", &s.theta), ("phi", &s.phi)] {
            let mut w = BufWriter::new(fs::File::create(dir.join(format!("{name}_{i:05}.bin")))?);
            io::write_binary(f, &mut w)?;
            w.flush()?;
        }
    }
    fs::write(dir.join("index.csv"), index)?;
    Ok(())
}

fn read_snapshots(dir: &Path, mesh: &Arc<Mesh>) -> Result<Vec<Snapshot>> {
    let index = fs::read_to_string(dir.join("index.csv")).context("cannot read snapshot index")?;
    let load = |name: &str, i: usize| -> Result<Field> {
        let path = dir.join(format!("{name}_{i:05}.bin"));
        let f = io::read_binary(BufReader::new(
            fs::File::open(&path).with_context(|| format!("cannot open {}", path.display()))?,
        ))?;
        Ok(Field::from_values(mesh.clone(), f.into_values())?)
    };
    let mut out = Vec::new();
    for line in index.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let (i, t) = line
            .split_once(',')
            .context("malformed snapshot index row")?;
        let i: usize = i.trim().parse().context("malformed snapshot index")?;
        let t: f64 = t.trim().parse().context("malformed snapshot time")?;
        let zeros = Field::zeros(mesh.clone());
        out.push(Snapshot {
            t,
            theta: load("theta", i)?,
            phi: load("phi", i)?,
            dphi_dt: zeros.clone(),
            sigma: zeros.clone(),
            xi: zeros,
        });
    }
    Ok(out)
}

/// Result of re-deriving a verdict from a persisted run.
pub struct Reverified {
    pub run_dir: PathBuf,
    pub verdict: ExtinctionVerdict,
    pub matches_verdict: bool,
    pub matches_bounds: bool,
}

/// Recomputes bounds and verdict from the config and the persisted
/// trajectory and snapshots, and compares them with the stored JSON.
pub fn reverify(prep: &Prepared, out_root: &Path) -> Result<Reverified> {
    let run_id = prep.cfg.run_id()?;
    let run_dir = out_root.join(&run_id);
    let traj_path = run_dir.join("trajectory.csv");
    if !traj_path.is_file() {
        bail!(
            "no persisted run at {}; run `simulate` first",
            run_dir.display()
        );
    }
    let (bounds, rho) = prep.bounds()?;
    let mut spec = prep.spec.clone();
    spec.rho = rho;
    let samples = read_trajectory_csv(BufReader::new(fs::File::open(&traj_path)?))?;
    let snap_dir = run_dir.join("snapshots");
    let snapshots = if snap_dir.is_dir() {
        read_snapshots(&snap_dir, &spec.mesh())?
    } else {
        Vec::new()
    };
    let traj = Trajectory {
        samples,
        snapshots,
        source_integral: Vec::new(),
        control_integral: Vec::new(),
        measure: spec.mesh().measure(),
        settings: prep.settings(prep.main_snapshots()),
        variant: spec.variant.label(),
    };
    let mut verdict = verify_sliding(&traj, &spec, &bounds, &prep.cfg.config.verify.options())?;
    verdict.run_id = Some(run_id);
    let stored = |name: &str| fs::read_to_string(run_dir.join(name)).unwrap_or_default();
    Ok(Reverified {
        matches_verdict: stored("verdict.json") == verdict.to_json() + "\n",
        matches_bounds: stored("bounds.json") == bounds.to_json() + "\n",
        run_dir,
        verdict,
    })
}

/// Exit status for a verdict: 0 on pass or inapplicable bound, 2 on fail.
pub fn exit_code(status: VerdictStatus) -> u8 {
    match status {
        VerdictStatus::Pass | VerdictStatus::BoundInapplicable => 0,
        VerdictStatus::Fail => 2,
    }
}
